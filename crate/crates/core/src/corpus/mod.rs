//! Treebank ingestion, region segmentation, and reading-time alignment.

pub mod conllu;
pub mod reading_times;
pub mod regions;

pub use conllu::{
    parse_conllu, validate_documents, validate_tree, write_conllu, Document, InvalidTreePolicy,
    Sentence, Token, TreeReport, ValidatedDocument, Violation,
};
pub use reading_times::{
    align_reading_times, parse_rt_file, read_rt_file, Aggregation, AlignedRt, RtObservation,
    RtTrim,
};
pub use regions::{
    check_sent_ids, parse_region_file, read_region_file, segment_corpus, segment_regions, Region,
    RegionEntry, RegionFallback, RegionIndex, RegionKey, SegmentedSentence, SentenceKey,
};
