//! Automated TLAPS proof search: hierarchical decomposition of proof
//! obligations with LLM proposals, retrieval-augmented leaf proving and
//! mechanical checking by the TLA+ proof manager.

pub mod corpus;
pub mod llm;
pub mod orchestrator;
pub mod prompts;
pub mod proof_ast;
pub mod retrieval;
pub mod scalar;
pub mod text;
pub mod verifier;

pub use scalar::Scalar;

pub type EmbeddingVector = retrieval::Embedding<f64>;
pub type EmbeddingVectorF32 = retrieval::Embedding<f32>;
pub type ReferenceSet = retrieval::ReferenceSet<f64>;
pub type ReferenceSetF32 = retrieval::ReferenceSet<f32>;
pub type CorpusRecord = corpus::CorpusRecord<f64>;
pub type CorpusRecordF32 = corpus::CorpusRecord<f32>;
