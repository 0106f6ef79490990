//! Deterministic random stream derivation.
//!
//! Every simulation component draws from its own ChaCha stream whose key is a
//! SHA-256 digest of the root seed and a tuple of labels. ChaCha is a
//! counter-based generator, so a stream depends only on its key and never on
//! the order in which replications are scheduled onto workers.

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use sha2::{Digest, Sha256};

/// Random stream handed to a single simulation component.
pub type SimRng = ChaCha12Rng;

/// One element of a stream key.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Label {
    Name(String),
    Index(u64),
}

impl From<&str> for Label {
    fn from(s: &str) -> Self {
        Label::Name(s.to_owned())
    }
}

impl From<String> for Label {
    fn from(s: String) -> Self {
        Label::Name(s)
    }
}

impl From<u64> for Label {
    fn from(i: u64) -> Self {
        Label::Index(i)
    }
}

impl From<usize> for Label {
    fn from(i: usize) -> Self {
        Label::Index(i as u64)
    }
}

impl From<u32> for Label {
    fn from(i: u32) -> Self {
        Label::Index(u64::from(i))
    }
}

/// Builder for a labelled stream key rooted at a seed.
///
/// ```
/// use lab_core::rng::StreamKey;
/// use rand::Rng;
///
/// let key = StreamKey::new(7).with("theorem1").with(100u64).with(3u64).with("arrivals");
/// let a: f64 = key.rng().random();
/// let b: f64 = key.rng().random();
/// assert_eq!(a, b);
/// ```
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct StreamKey {
    root: u64,
    labels: Vec<Label>,
}

impl StreamKey {
    pub fn new(root: u64) -> Self {
        Self { root, labels: Vec::new() }
    }

    /// Returns a copy of this key extended by one label.
    pub fn with(&self, label: impl Into<Label>) -> Self {
        let mut labels = self.labels.clone();
        labels.push(label.into());
        Self { root: self.root, labels }
    }

    pub fn root(&self) -> u64 {
        self.root
    }

    pub fn labels(&self) -> &[Label] {
        &self.labels
    }

    /// 256-bit seed for this key.
    pub fn seed(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(b"lab-stream-v1");
        hasher.update(self.root.to_le_bytes());
        for label in &self.labels {
            // Tag and length prefix keep ("ab","c") distinct from ("a","bc").
            match label {
                Label::Name(s) => {
                    hasher.update([0u8]);
                    hasher.update((s.len() as u64).to_le_bytes());
                    hasher.update(s.as_bytes());
                }
                Label::Index(i) => {
                    hasher.update([1u8]);
                    hasher.update(i.to_le_bytes());
                }
            }
        }
        hasher.finalize().into()
    }

    pub fn rng(&self) -> SimRng {
        SimRng::from_seed(self.seed())
    }
}

/// Derives the random stream for `root` and a label tuple.
pub fn derive_stream<L: Into<Label> + Clone>(root: u64, labels: &[L]) -> SimRng {
    labels
        .iter()
        .cloned()
        .fold(StreamKey::new(root), |key, l| key.with(l))
        .rng()
}

/// Uniform draw on the open interval (0, 1), safe for `ln` and negative powers.
pub(crate) fn open_unit<R: rand::Rng + ?Sized>(rng: &mut R) -> f64 {
    loop {
        let u: f64 = rng.random();
        if u > 0.0 {
            return u;
        }
    }
}
