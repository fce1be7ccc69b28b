use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("net {id} has {distinct} distinct pin(s); at least 2 are required")]
    DegenerateNet { id: u64, distinct: usize },

    #[error("pin ({x}, {y}) of net {id} has a negative coordinate")]
    NegativeCoordinate { id: u64, x: i64, y: i64 },

    #[error("cannot batch an empty list of grids")]
    EmptyBatch,

    #[error("cannot build a spanning tree over an empty point set")]
    EmptyPointSet,

    #[error("net degree exceeds the limit of {max_degree}: {}", format_ids(.ids))]
    DegreeTooLarge { max_degree: usize, ids: Vec<u64> },

    #[error("degree {0} is too small; a net needs at least 2 pins")]
    DegreeTooSmall(usize),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("forward cache does not match the supplied parameters or gradient: {0}")]
    CacheMismatch(String),

    #[error("dataset has {0} nets; at least 10 are required for an 80/10/10 split")]
    TooFewNets(usize),

    #[error("net {id}: {msg}")]
    InvalidLabels { id: u64, msg: String },

    #[error("net {0} has no oracle labels or optimal wirelength")]
    MissingOracle(u64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{}, line {line}: {msg}", .path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("{}: unsupported checkpoint version {found} (expected {expected})", .path.display())]
    UnsupportedVersion {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("{}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn format_ids(ids: &[u64]) -> String {
    let shown: Vec<String> = ids.iter().take(20).map(|id| id.to_string()).collect();
    if ids.len() > shown.len() {
        format!("nets {} and {} more", shown.join(", "), ids.len() - shown.len())
    } else {
        format!("nets {}", shown.join(", "))
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
