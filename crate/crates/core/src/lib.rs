pub mod cli;
pub mod corpus;
pub mod embedding;
pub mod eval;
pub mod exec;
pub mod http;
pub mod llm;
pub mod pipeline;
pub mod prompting;
pub mod retrieval;
pub mod retry;
pub mod synthetic;

mod binio;
