//! Experience memory: deterministic text embeddings and a vectorized,
//! append-only archive of past interactions with exact top-k retrieval.

mod archive;
mod embed;

pub use archive::{Archive, Feedback, MemoryError, MemoryRecord, NewRecord, Origin, Retrieved};
pub use embed::{bucket, embed_text, fnv1a64, tokenize, EmbeddingVector, EMBEDDING_DIM};
