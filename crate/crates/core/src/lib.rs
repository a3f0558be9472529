//! Open visual knowledge extraction: corpus handling, relational region
//! detection, format-free knowledge generation, diversity-driven enhancement,
//! evaluation, knowledge-graph comparison and downstream enrichment.

pub mod adapter;
pub mod annotation;
pub mod apps;
pub mod corpus;
pub mod diversify;
pub mod eval;
pub mod generator;
pub mod io;
pub mod kg;
pub mod loss;
pub mod mock;
pub mod pipeline;
pub mod region;
pub mod text;
pub mod training;

pub use adapter::AdapterError;
pub use corpus::{
    BoundingBox, Corpus, CorpusError, EntityMention, ImageRecord, KnowledgePhrase, PhraseOrigin, Provenance,
    RelationalDescriptor, Split,
};
pub use loss::LossError;
