//! External knowledge: snapshot lookup, filtering, multiword binding and
//! context-based validity selection.

pub mod bind;
pub mod context;
pub mod filter;
pub mod kb;
pub mod pipeline;
pub mod validity;

pub use bind::{bind_multiword, BoundToken};
pub use context::{build_context, ContextBag};
pub use filter::{contains_whole_word, filter_candidates};
pub use kb::{kb_lookup, CandidateSet, KbEntry, KbRecord, KbSnapshot, KnowledgeCandidate, MAX_CANDIDATES};
pub use pipeline::{prepare_knowledge, select_facts, FactRow, KnowledgeFact, PreparedKnowledge, SelectionPolicy};
pub use validity::{select_valid, validity_scores};
