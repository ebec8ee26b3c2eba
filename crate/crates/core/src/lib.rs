//! Corpus curation for Indic and English text: document preparation from
//! web, PDF and speech sources, cleaning, language identification, quality
//! statistics and filters, MinHash deduplication, Kneser-Ney perplexity
//! filtering, translation templating and dictionary transliteration.

pub mod analyze;
pub mod binfmt;
pub mod clean;
pub mod config;
pub mod dedup;
pub mod flag;
pub mod lang;
pub mod lid;
pub mod lm;
pub mod manifest;
pub mod model;
pub mod ocr;
pub mod pipeline;
pub mod provider;
pub mod speech;
pub mod translate;
pub mod xlit;

pub use model::{Document, Source, Stage, StageVerdict};
