//! Sentence vectors behind a provider port, cosine similarity, and the
//! token-overlap (Szymkiewicz–Simpson) alternative scorer.

use std::collections::{BTreeSet, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed::fnv1a;

pub const DEFAULT_DIM: usize = 384;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SentenceVector {
    values: Vec<f64>,
}

impl SentenceVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("zero-dimensional vector".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("vector has non-finite entries".into()));
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, k: f64) -> Result<Self> {
        Self::new(self.values.iter().map(|v| v * k).collect())
    }
}

impl TryFrom<Vec<f64>> for SentenceVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<SentenceVector> for Vec<f64> {
    fn from(v: SentenceVector) -> Self {
        v.values
    }
}

/// What a provider embeds: the text, plus the news id for keyed stores.
#[derive(Debug, Clone, Copy)]
pub struct Doc<'a> {
    pub id: &'a str,
    pub text: &'a str,
}

impl<'a> Doc<'a> {
    pub fn new(id: &'a str, text: &'a str) -> Self {
        Self { id, text }
    }
}

pub trait EmbeddingProvider: Send + Sync {
    fn dim(&self) -> usize;

    fn embed(&self, doc: Doc<'_>) -> Result<SentenceVector>;

    fn embed_batch(&self, docs: &[Doc<'_>]) -> Vec<Result<SentenceVector>> {
        docs.iter().map(|d| self.embed(*d)).collect()
    }
}

/// Lowercase alphanumeric word tokens.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

pub fn token_set(text: &str) -> BTreeSet<String> {
    tokenize(text).into_iter().collect()
}

/// Signed feature hashing of word n-grams (1..=`max_ngram`), unit-normalized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashEmbedder {
    dim: usize,
    max_ngram: usize,
}

impl Default for HashEmbedder {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            max_ngram: 2,
        }
    }
}

impl HashEmbedder {
    pub fn new(dim: usize, max_ngram: usize) -> Result<Self> {
        if dim == 0 || max_ngram == 0 {
            return Err(Error::Config(
                "hash embedder needs dim >= 1 and max_ngram >= 1".into(),
            ));
        }
        Ok(Self { dim, max_ngram })
    }

    pub fn embed_text(&self, text: &str) -> Result<SentenceVector> {
        if text.trim().is_empty() {
            return Err(Error::InvalidInput("cannot embed empty text".into()));
        }
        let tokens = tokenize(text);
        if tokens.is_empty() {
            return Err(Error::InvalidInput(format!("no word tokens in {text:?}")));
        }
        let mut v = vec![0.0; self.dim];
        for n in 1..=self.max_ngram.min(tokens.len()) {
            for gram in tokens.windows(n) {
                let h = fnv1a(gram.join(" ").as_bytes());
                let idx = (h % self.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                // Longer n-grams count a bit less than unigrams.
                v[idx] += sign / n as f64;
            }
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::InvalidInput(format!(
                "hashed features cancel for {text:?}"
            )));
        }
        v.iter_mut().for_each(|x| *x /= norm);
        SentenceVector::new(v)
    }
}

impl EmbeddingProvider for HashEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, doc: Doc<'_>) -> Result<SentenceVector> {
        self.embed_text(doc.text)
    }
}

#[derive(Debug, Deserialize, Serialize)]
struct StoredVector {
    id: String,
    vector: Vec<f64>,
}

/// Vectors keyed by news id, loaded from `{id, vector}` JSONL.
#[derive(Debug, Clone, Default)]
pub struct PrecomputedStore {
    dim: usize,
    vectors: HashMap<String, SentenceVector>,
}

impl PrecomputedStore {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, SentenceVector)>) -> Result<Self> {
        let mut store = Self::default();
        for (id, v) in pairs {
            store.insert(id, v)?;
        }
        Ok(store)
    }

    fn insert(&mut self, id: String, v: SentenceVector) -> Result<()> {
        if self.vectors.is_empty() {
            self.dim = v.dim();
        } else if v.dim() != self.dim {
            return Err(Error::DimensionMismatch {
                left: self.dim,
                right: v.dim(),
            });
        }
        self.vectors.insert(id, v);
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut store = Self::default();
        for (i, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row_err = |message: String| Error::Row {
                file: path.display().to_string(),
                line: i + 1,
                message,
            };
            let row: StoredVector =
                serde_json::from_str(&line).map_err(|e| row_err(e.to_string()))?;
            let v = SentenceVector::new(row.vector).map_err(|e| row_err(e.to_string()))?;
            store
                .insert(row.id, v)
                .map_err(|e| row_err(e.to_string()))?;
        }
        Ok(store)
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }
}

impl EmbeddingProvider for PrecomputedStore {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, doc: Doc<'_>) -> Result<SentenceVector> {
        self.vectors
            .get(doc.id)
            .cloned()
            .ok_or_else(|| Error::MissingVector(doc.id.to_string()))
    }
}

/// `dot(a, b) / (|a| |b|)`, clamped to `[-1, 1]`.
pub fn cosine(a: &SentenceVector, b: &SentenceVector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimensionMismatch {
            left: a.dim(),
            right: b.dim(),
        });
    }
    let (na, nb) = (a.norm(), b.norm());
    if na == 0.0 || nb == 0.0 {
        return Err(Error::UndefinedSimilarity("cosine with a zero vector"));
    }
    let dot: f64 = a.values.iter().zip(&b.values).map(|(x, y)| x * y).sum();
    Ok((dot / (na * nb)).clamp(-1.0, 1.0))
}

/// `|a ∩ b| / min(|a|, |b|)`; 0 when exactly one side is empty.
pub fn overlap_coefficient(a: &BTreeSet<String>, b: &BTreeSet<String>) -> Result<f64> {
    if a.is_empty() && b.is_empty() {
        return Err(Error::UndefinedSimilarity(
            "overlap of two empty token sets",
        ));
    }
    let smaller = a.len().min(b.len());
    if smaller == 0 {
        return Ok(0.0);
    }
    let shared = a.intersection(b).count();
    Ok(shared as f64 / smaller as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(words: &[&str]) -> BTreeSet<String> {
        words.iter().map(|w| w.to_string()).collect()
    }

    fn v(x: &[f64]) -> SentenceVector {
        SentenceVector::new(x.to_vec()).unwrap()
    }

    #[test]
    fn hash_embedder_is_deterministic_unit_norm() {
        let e = HashEmbedder::default();
        let a = e.embed_text("Reliance shares gain after results").unwrap();
        let b = e.embed_text("Reliance shares gain after results").unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 384);
        assert!((a.norm() - 1.0).abs() < 1e-12);
        assert!(e.embed_text("   ").is_err());
        assert!(e.embed_text("!!! ---").is_err());
        let small = HashEmbedder::new(16, 1).unwrap();
        assert_eq!(small.embed_text("x y z").unwrap().dim(), 16);
    }

    #[test]
    fn precomputed_store_lookup() {
        let store = PrecomputedStore::from_pairs([("n1".to_string(), v(&[1.0, 0.0]))]).unwrap();
        assert_eq!(
            store.embed(Doc::new("n1", "whatever")).unwrap(),
            v(&[1.0, 0.0])
        );
        assert!(matches!(
            store.embed(Doc::new("n2", "x")),
            Err(Error::MissingVector(_))
        ));
        assert!(PrecomputedStore::from_pairs([
            ("a".to_string(), v(&[1.0])),
            ("b".to_string(), v(&[1.0, 2.0]))
        ])
        .is_err());
    }

    #[test]
    fn precomputed_store_from_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("vec.jsonl");
        std::fs::write(
            &p,
            "{\"id\":\"a\",\"vector\":[0.5,0.5]}\n\n{\"id\":\"b\",\"vector\":[1,0]}\n",
        )
        .unwrap();
        let s = PrecomputedStore::load(&p).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.dim(), 2);
        std::fs::write(&p, "{\"id\":\"a\",\"vector\":[0.5]}\n{\"id\":\"b\"}\n").unwrap();
        assert!(matches!(
            PrecomputedStore::load(&p),
            Err(Error::Row { line: 2, .. })
        ));
    }

    #[test]
    fn cosine_examples() {
        let a = v(&[1.0, 2.0, 3.0]);
        assert!((cosine(&a, &a).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine(&v(&[1.0, 0.0]), &v(&[0.0, 1.0])).unwrap(), 0.0);
        assert!((cosine(&a, &a.scaled(-1.0).unwrap()).unwrap() + 1.0).abs() < 1e-15);
        assert!(matches!(
            cosine(&a, &v(&[1.0])),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            cosine(&a, &v(&[0.0, 0.0, 0.0])),
            Err(Error::UndefinedSimilarity(_))
        ));
    }

    #[test]
    fn overlap_examples() {
        let r = overlap_coefficient(&set(&["a", "b", "c"]), &set(&["b", "c", "d"])).unwrap();
        assert!((r - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(
            overlap_coefficient(&set(&["a", "b"]), &set(&["a", "b"])).unwrap(),
            1.0
        );
        assert_eq!(
            overlap_coefficient(&set(&["a"]), &set(&["z"])).unwrap(),
            0.0
        );
        assert_eq!(overlap_coefficient(&set(&["a"]), &set(&[])).unwrap(), 0.0);
        assert!(overlap_coefficient(&set(&[]), &set(&[])).is_err());
        assert_eq!(token_set("TCS Gains, tcs-gains!"), set(&["tcs", "gains"]));
    }

    #[test]
    fn hash_embedder_rarely_collides() {
        let e = HashEmbedder::default();
        let words = [
            "infosys", "rally", "quarter", "profit", "bank", "loan", "steel", "export", "margin",
            "guidance", "rupee", "oil", "auto", "sales", "pharma", "approval",
        ];
        let texts: Vec<String> = (0..1000)
            .map(|i| {
                let (a, b, c) = (i % 16, (i / 16) % 16, (i / 256) % 16);
                format!("{} {} {} item{}", words[a], words[b], words[c], i)
            })
            .collect();
        let vecs: Vec<_> = texts.iter().map(|t| e.embed_text(t).unwrap()).collect();
        let mut high = 0usize;
        let mut pairs = 0usize;
        for i in 0..vecs.len() {
            for j in i + 1..vecs.len() {
                pairs += 1;
                if cosine(&vecs[i], &vecs[j]).unwrap() > 0.99 {
                    high += 1;
                }
            }
        }
        assert!((high as f64) < 0.01 * pairs as f64, "{high} of {pairs}");
    }

    fn nonzero_vec() -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(-10.0f64..10.0, 4)
            .prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-6)
    }

    proptest! {
        #[test]
        fn cosine_symmetric_and_scale_invariant(a in nonzero_vec(), b in nonzero_vec(), k in 0.01f64..100.0) {
            let (a, b) = (v(&a), v(&b));
            let ab = cosine(&a, &b).unwrap();
            prop_assert_eq!(ab, cosine(&b, &a).unwrap());
            prop_assert!((cosine(&a.scaled(k).unwrap(), &b).unwrap() - ab).abs() < 1e-12);
            prop_assert!((-1.0..=1.0).contains(&ab));
        }

        #[test]
        fn overlap_self_is_one(words in proptest::collection::btree_set("[a-z]{1,6}", 1..10)) {
            prop_assert_eq!(overlap_coefficient(&words, &words).unwrap(), 1.0);
        }
    }
}

#[cfg(feature = "remote")]
pub use remote_embedder::RemoteEmbedder;

#[cfg(feature = "remote")]
mod remote_embedder {
    use super::*;
    use crate::remote::{JsonClient, RemoteConfig};

    #[derive(Serialize)]
    struct EmbedRequest<'a> {
        texts: Vec<&'a str>,
    }

    #[derive(Deserialize)]
    struct EmbedResponse {
        vectors: Vec<Vec<f64>>,
    }

    /// Client for an endpoint taking `{texts: [...]}` and answering `{vectors: [[...]]}`.
    #[derive(Debug)]
    pub struct RemoteEmbedder {
        client: JsonClient,
        dim: usize,
    }

    impl RemoteEmbedder {
        pub fn new(config: RemoteConfig, dim: usize) -> Result<Self> {
            if dim == 0 {
                return Err(Error::Config("remote embedder dim must be positive".into()));
            }
            Ok(Self {
                client: JsonClient::new(config)?,
                dim,
            })
        }

        fn request(&self, texts: Vec<&str>) -> Result<Vec<SentenceVector>> {
            let n = texts.len();
            let resp: EmbedResponse = self.client.post(&EmbedRequest { texts })?;
            if resp.vectors.len() != n {
                return Err(Error::Remote {
                    message: format!("asked for {n} vectors, got {}", resp.vectors.len()),
                    attempts: 1,
                    retryable: false,
                });
            }
            resp.vectors
                .into_iter()
                .map(|v| {
                    let v = SentenceVector::new(v)?;
                    if v.dim() != self.dim {
                        return Err(Error::DimensionMismatch {
                            left: self.dim,
                            right: v.dim(),
                        });
                    }
                    Ok(v)
                })
                .collect()
        }
    }

    impl EmbeddingProvider for RemoteEmbedder {
        fn dim(&self) -> usize {
            self.dim
        }

        fn embed(&self, doc: Doc<'_>) -> Result<SentenceVector> {
            if doc.text.trim().is_empty() {
                return Err(Error::InvalidInput("cannot embed empty text".into()));
            }
            self.request(vec![doc.text])?
                .pop()
                .ok_or(Error::Empty("embedding response"))
        }

        fn embed_batch(&self, docs: &[Doc<'_>]) -> Vec<Result<SentenceVector>> {
            if docs.iter().any(|d| d.text.trim().is_empty()) {
                return docs.iter().map(|d| self.embed(*d)).collect();
            }
            match self.request(docs.iter().map(|d| d.text).collect()) {
                Ok(vs) => vs.into_iter().map(Ok).collect(),
                Err(e) => {
                    let msg = e.to_string();
                    let retryable = e.is_retryable();
                    docs.iter()
                        .map(|_| {
                            Err(Error::Remote {
                                message: msg.clone(),
                                attempts: 1,
                                retryable,
                            })
                        })
                        .collect()
                }
            }
        }
    }
}
