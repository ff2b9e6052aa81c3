use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("zero-norm embedding")]
    ZeroNorm,

    #[error("record {id}: {source}")]
    Record {
        id: u64,
        #[source]
        source: alloc::boxed::Box<Error>,
    },

    #[error("invalid feature set: {0}")]
    Validation(String),

    #[error("duplicate record ids: {0:?}")]
    DuplicateIds(Vec<u64>),

    #[error("overlapping record ids between non-member and pseudo-member sets: {0:?}")]
    OverlappingIds(Vec<u64>),

    #[error("transformation channel {index} out of range (record has {available})")]
    ChannelOutOfRange { index: usize, available: usize },

    #[error("no transformation channels present; use the cosine-similarity attack for K = 0 inputs")]
    NoTransforms,

    #[error("at least {required} scores are needed, got {actual}")]
    TooFewScores { required: usize, actual: usize },

    #[error("pseudo-member threshold {threshold:.6} selects no records (max cosine similarity {max_cs:.6}); lower lambda or choose the random strategy")]
    EmptyPseudoMembers { threshold: f64, max_cs: f64 },

    #[error("random pseudo-member count {requested} exceeds pool size {available}")]
    RandomCountTooLarge { requested: usize, available: usize },

    #[error("both classes are required, got {members} members and {non_members} non-members")]
    SingleClass { members: usize, non_members: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("invalid fractions: {0}")]
    InvalidFractions(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error(transparent)]
    Decode(#[from] crate::miaf::DecodeError),
}

impl Error {
    /// Wraps this error with the id of the record that caused it.
    pub fn for_record(self, id: u64) -> Self {
        Error::Record { id, source: alloc::boxed::Box::new(self) }
    }
}
