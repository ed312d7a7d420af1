//! Evaluation and analysis utilities: top-k accuracy over ranked candidate
//! lists, a pooled two-proportion z-test, PCA projection of context
//! embeddings, and TSV exporters for attention profiles and embeddings.

pub mod pca;
pub mod ztest;

pub use pca::{pca_project, ProjectionResult};
pub use ztest::{erf, erfc, two_proportion_z_test, ZTestResult};

use crate::attention::DaaOutput;
use crate::fmt::fmt_sig6;
use crate::structio::ProteinStructure;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum Error {
    #[error("empty instance set")]
    EmptyInstanceSet,
    #[error("instance {instance}: empty candidate list")]
    EmptyCandidates { instance: usize },
    #[error("instance {instance}: duplicate candidate {item:?}")]
    DuplicateCandidate { instance: usize, item: String },
    #[error("k must be at least 1")]
    ZeroK,
    #[error("invalid counts: {successes} successes out of {trials} trials")]
    InvalidCounts { successes: u64, trials: u64 },
    #[error("need at least 2 rows for projection, got {rows}")]
    NotEnoughRows { rows: usize },
    #[error("component count {requested} out of range 1..={limit}")]
    BadComponentCount { requested: usize, limit: usize },
    #[error("zero-variance data: all rows identical")]
    ZeroVariance,
    #[error("non-finite value in data matrix")]
    NonFiniteData,
    #[error("length mismatch: {weights} weights vs {residues} residues")]
    LengthMismatch { weights: usize, residues: usize },
    #[error("empty entry list")]
    EmptyEntries,
    #[error(
        "entry {index}: embedding dimension {actual} does not match first entry dimension {expected}"
    )]
    InconsistentDimensions { index: usize, expected: usize, actual: usize },
}

/// One evaluation instance: a ground-truth item and the candidates some
/// model ranked for it, most confident first. Items are opaque strings;
/// this module never reorders or tie-breaks them.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RankedInstance {
    pub truth: String,
    pub ranked_candidates: Vec<String>,
}

/// A batch of ranked-prediction instances.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RankedPredictions {
    pub instances: Vec<RankedInstance>,
}

impl RankedPredictions {
    /// Non-empty set, non-empty candidate lists, no duplicate candidates
    /// within an instance.
    pub fn validate(&self) -> Result<(), Error> {
        if self.instances.is_empty() {
            return Err(Error::EmptyInstanceSet);
        }
        for (i, inst) in self.instances.iter().enumerate() {
            let instance = i + 1;
            if inst.ranked_candidates.is_empty() {
                return Err(Error::EmptyCandidates { instance });
            }
            let mut seen = std::collections::HashSet::new();
            for cand in &inst.ranked_candidates {
                if !seen.insert(cand.as_str()) {
                    return Err(Error::DuplicateCandidate { instance, item: cand.clone() });
                }
            }
        }
        Ok(())
    }
}

/// Fraction of instances whose truth appears among the first
/// `min(k, list length)` candidates. A truth absent from the list is a
/// miss, never an error.
pub fn top_k_accuracy(preds: &RankedPredictions, k: usize) -> Result<f64, Error> {
    if k == 0 {
        return Err(Error::ZeroK);
    }
    preds.validate()?;
    let hits = preds
        .instances
        .iter()
        .filter(|inst| {
            inst.ranked_candidates
                .iter()
                .take(k)
                .any(|c| *c == inst.truth)
        })
        .count();
    Ok(hits as f64 / preds.instances.len() as f64)
}

/// Parse ranked predictions from TSV: one instance per line, first field the
/// truth, remaining fields the candidates most-confident first. Lines
/// starting with `#` and blank lines are skipped.
pub fn parse_ranked_tsv(text: &str) -> Result<RankedPredictions, Error> {
    let mut instances = Vec::new();
    for line in text.lines() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = line.split('\t');
        let truth = fields.next().unwrap_or_default().to_string();
        let ranked_candidates: Vec<String> = fields.map(str::to_string).collect();
        instances.push(RankedInstance { truth, ranked_candidates });
    }
    let preds = RankedPredictions { instances };
    preds.validate()?;
    Ok(preds)
}

/// Render an attention pooling output against the residues it attended
/// over: `index<TAB>label<TAB>weight`, one line per residue, after a
/// `# columns:` header. Weights are printed at 6 significant digits.
pub fn export_attention_profile(
    output: &DaaOutput,
    protein: &ProteinStructure,
) -> Result<String, Error> {
    if output.weights.len() != protein.len() {
        return Err(Error::LengthMismatch {
            weights: output.weights.len(),
            residues: protein.len(),
        });
    }
    let mut out = String::from("# columns: index label weight\n");
    for (res, w) in protein.residues.iter().zip(&output.weights) {
        out.push_str(&format!("{}\t{}\t{}\n", res.index, res.label, fmt_sig6(*w)));
    }
    Ok(out)
}

/// One pooled context embedding tagged with the protein and molecule that
/// produced it.
#[derive(Clone, Debug, PartialEq)]
pub struct ContextEntry {
    pub protein_id: String,
    pub molecule_id: String,
    pub embedding: Vec<f64>,
}

/// Assemble context embeddings into a TSV matrix in input order:
/// `protein_id<TAB>molecule_id<TAB>v1..vd`, values at 6 significant digits.
/// With `project_2d` the first two principal-component coordinates are
/// appended as extra columns (requires at least 2 entries and 2 dimensions).
pub fn export_context_embeddings(
    entries: &[ContextEntry],
    project_2d: bool,
) -> Result<String, Error> {
    if entries.is_empty() {
        return Err(Error::EmptyEntries);
    }
    let d = entries[0].embedding.len();
    for (i, e) in entries.iter().enumerate() {
        if e.embedding.len() != d {
            return Err(Error::InconsistentDimensions {
                index: i + 1,
                expected: d,
                actual: e.embedding.len(),
            });
        }
        if !e.embedding.iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteData);
        }
    }

    let projected = if project_2d {
        let mut mat = crate::mat::Mat::zeros(entries.len(), d);
        for (i, e) in entries.iter().enumerate() {
            for (j, v) in e.embedding.iter().enumerate() {
                mat.set(i, j, *v);
            }
        }
        Some(pca_project(&mat, 2)?.projected)
    } else {
        None
    };

    let mut header = String::from("# columns: protein_id molecule_id");
    for j in 1..=d {
        header.push_str(&format!(" v{j}"));
    }
    if projected.is_some() {
        header.push_str(" pc1 pc2");
    }
    let mut out = header;
    out.push('\n');
    for (i, e) in entries.iter().enumerate() {
        out.push_str(&e.protein_id);
        out.push('\t');
        out.push_str(&e.molecule_id);
        for v in &e.embedding {
            out.push('\t');
            out.push_str(&fmt_sig6(*v));
        }
        if let Some(p) = &projected {
            out.push('\t');
            out.push_str(&fmt_sig6(p.get(i, 0)));
            out.push('\t');
            out.push_str(&fmt_sig6(p.get(i, 1)));
        }
        out.push('\n');
    }
    Ok(out)
}
