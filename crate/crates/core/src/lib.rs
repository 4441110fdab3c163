//! Layout-aware dynamic retrieval over multi-page, visually rich documents.
//!
//! Ingestion reads a document page by page and builds two indices: a
//! [`model::DocumentGraph`] of page elements and their layout, reference and
//! continuation relations, and a dense [`index::NeuralIndex`] over element
//! summaries. At question time an [`agent`] mixes semantic search,
//! declarative graph queries and community-based expansion until it has
//! gathered enough evidence. The [`eval`] module scores retrievers on
//! page-level perfect recall and irrelevant-page ratio.

pub mod agent;
pub mod config;
pub mod eval;
pub mod gateway;
pub mod index;
pub mod ingest;
pub mod json;
pub mod model;
pub mod symbolic;
pub mod text;
