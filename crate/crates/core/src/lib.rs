//! Retrieval-augmented Structured Text generation: knowledge bases, case
//! retrieval, planning, API recommendation, generation with compiler
//! feedback, and the benchmark harness.

pub mod api_rec;
pub mod generator;
pub mod kb;
pub mod llm;
pub mod planner;
pub mod reply;
pub mod retrieval;
pub mod task;
pub mod templates;
pub mod harness;
