//! Input structures and their on-disk formats.
//!
//! Three text formats, all defined exactly so other tools can produce them:
//!
//! * Residue TSV: one record per line, `index<TAB>label<TAB>x<TAB>y<TAB>z`,
//!   `#` starts a comment line.
//! * Pose XYZ: standard XYZ (atom count, free comment, then
//!   `element x y z` whitespace-separated), one file per pose.
//! * Embedding TSV: n lines of d tab-separated floats, no header
//!   (`#` comment lines are skipped, so exported files with metadata
//!   headers re-parse).
//!
//! Emitted floats carry 6 significant digits. Parsers validate every type
//! invariant; seeded generators stand in for upstream encoders and docking
//! runs in tests and demos.

use crate::fmt::fmt_sig6;
use crate::mat::Mat;
use crate::rng::SeededRng;

/// One residue: 1-based index, short label, and a single reference point
/// (the Cα position for PDB input, the sole provided point for TSV).
#[derive(Clone, Debug, PartialEq)]
pub struct Residue {
    pub index: usize,
    pub label: String,
    pub position: [f64; 3],
}

/// Ordered residue list; indices run 1..=n, all coordinates finite.
#[derive(Clone, Debug, PartialEq)]
pub struct ProteinStructure {
    pub residues: Vec<Residue>,
}

impl ProteinStructure {
    pub fn len(&self) -> usize {
        self.residues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residues.is_empty()
    }
}

/// One ligand pose: parallel element labels and atom positions.
#[derive(Clone, Debug, PartialEq)]
pub struct Pose {
    pub elements: Vec<String>,
    pub positions: Vec<[f64; 3]>,
}

/// K poses sharing one atom count and element sequence.
#[derive(Clone, Debug, PartialEq)]
pub struct PoseEnsemble {
    pub poses: Vec<Pose>,
}

impl PoseEnsemble {
    /// Number of poses K.
    pub fn n_poses(&self) -> usize {
        self.poses.len()
    }

    /// Atoms per pose.
    pub fn n_atoms(&self) -> usize {
        self.poses[0].positions.len()
    }
}

/// n×d per-residue embedding matrix, rows in residue order.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    pub values: Mat,
}

impl EmbeddingMatrix {
    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("malformed line {line}: {detail}")]
    MalformedLine { line: usize, detail: String },
    #[error("non-finite coordinate at line {0}")]
    NonFiniteCoordinate(usize),
    #[error("non-finite value at line {0}")]
    NonFiniteValue(usize),
    #[error("duplicate residue index {index} at line {line}")]
    DuplicateIndex { line: usize, index: i64 },
    #[error("non-contiguous residue index {index} at line {line} (expected {expected})")]
    NonContiguousIndex {
        line: usize,
        index: i64,
        expected: i64,
    },
    #[error("empty input: no data records")]
    Empty,
    #[error("zero CA atoms")]
    NoCaAtoms,
    #[error("unparseable coordinate columns at line {0}")]
    BadCoordinateColumns(usize),
    #[error("pose {pose}: count line declares {declared} atoms but found {actual}")]
    XyzCountMismatch {
        pose: usize,
        declared: usize,
        actual: usize,
    },
    #[error("pose atom mismatch: pose {0} does not match pose 1")]
    PoseAtomMismatch(usize),
    #[error("ragged row at line {line}: expected {expected} fields, got {actual}")]
    RaggedRow {
        line: usize,
        expected: usize,
        actual: usize,
    },
    #[error("dimensions must be at least 1")]
    ZeroDimension,
    #[error("anchor residue {index} out of range 1..={n}")]
    InvalidAnchor { index: usize, n: usize },
    #[error("spread must be positive")]
    NonPositiveSpread,
}

fn parse_float(field: &str, line: usize) -> Result<f64, Error> {
    field.trim().parse::<f64>().map_err(|_| Error::MalformedLine {
        line,
        detail: format!("expected a number, got {field:?}"),
    })
}

/// Parses the residue TSV format. Records must carry contiguous indices
/// (any start); output indices are renumbered 1..=n in file order.
pub fn parse_protein_tsv(text: &str) -> Result<ProteinStructure, Error> {
    let mut residues = Vec::new();
    let mut file_start: Option<i64> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if fields.len() != 5 {
            return Err(Error::MalformedLine {
                line,
                detail: format!("expected 5 tab-separated fields, got {}", fields.len()),
            });
        }
        let index: i64 = fields[0].trim().parse().map_err(|_| Error::MalformedLine {
            line,
            detail: format!("expected an integer index, got {:?}", fields[0]),
        })?;
        match file_start {
            None => file_start = Some(index),
            Some(start) => {
                let expected = start + residues.len() as i64;
                if index >= start && index < expected {
                    return Err(Error::DuplicateIndex { line, index });
                }
                if index != expected {
                    return Err(Error::NonContiguousIndex {
                        line,
                        index,
                        expected,
                    });
                }
            }
        }
        let mut position = [0.0; 3];
        for (c, field) in fields[2..5].iter().enumerate() {
            let v = parse_float(field, line)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCoordinate(line));
            }
            position[c] = v;
        }
        residues.push(Residue {
            index: residues.len() + 1,
            label: fields[1].trim().to_string(),
            position,
        });
    }
    if residues.is_empty() {
        return Err(Error::Empty);
    }
    Ok(ProteinStructure { residues })
}

/// Serializes a structure to the residue TSV format.
pub fn format_protein_tsv(protein: &ProteinStructure) -> String {
    let mut out = String::new();
    for r in &protein.residues {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\t{}\n",
            r.index,
            r.label,
            fmt_sig6(r.position[0]),
            fmt_sig6(r.position[1]),
            fmt_sig6(r.position[2])
        ));
    }
    out
}

/// Extracts the Cα trace from PDB-style fixed-column ATOM records, one
/// residue per CA atom in file order. Everything that is not an ATOM
/// record is ignored.
pub fn parse_pdb_ca(text: &str) -> Result<ProteinStructure, Error> {
    let mut residues = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        if raw.get(0..6).map(str::trim) != Some("ATOM") {
            continue;
        }
        let atom_name = match raw.get(12..16) {
            Some(name) => name.trim(),
            None => continue, // truncated before the atom-name field: cannot be CA
        };
        if atom_name != "CA" {
            continue;
        }
        let label = raw.get(17..20).map(str::trim).unwrap_or("").to_string();
        let mut position = [0.0; 3];
        for (c, range) in [(0, 30..38), (1, 38..46), (2, 46..54)] {
            let field = raw.get(range).ok_or(Error::BadCoordinateColumns(line))?;
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::BadCoordinateColumns(line))?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCoordinate(line));
            }
            position[c] = v;
        }
        residues.push(Residue {
            index: residues.len() + 1,
            label,
            position,
        });
    }
    if residues.is_empty() {
        return Err(Error::NoCaAtoms);
    }
    Ok(ProteinStructure { residues })
}

fn parse_one_xyz(text: &str, pose: usize) -> Result<Pose, Error> {
    let lines: Vec<&str> = text.lines().collect();
    let count_line = lines
        .first()
        .map(|l| l.trim())
        .filter(|l| !l.is_empty())
        .ok_or(Error::Empty)?;
    let declared: usize = count_line.parse().map_err(|_| Error::MalformedLine {
        line: 1,
        detail: format!("pose {pose}: expected an atom count, got {count_line:?}"),
    })?;
    let mut elements = Vec::new();
    let mut positions = Vec::new();
    // Line 2 is a free comment; atom records start at line 3.
    for (lineno, raw) in lines.iter().enumerate().skip(2) {
        let line = lineno + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(Error::MalformedLine {
                line,
                detail: format!(
                    "pose {pose}: expected `element x y z`, got {} fields",
                    fields.len()
                ),
            });
        }
        let mut position = [0.0; 3];
        for (c, field) in fields[1..4].iter().enumerate() {
            let v = parse_float(field, line)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteCoordinate(line));
            }
            position[c] = v;
        }
        elements.push(fields[0].to_string());
        positions.push(position);
    }
    if positions.len() != declared {
        return Err(Error::XyzCountMismatch {
            pose,
            declared,
            actual: positions.len(),
        });
    }
    if positions.is_empty() {
        return Err(Error::Empty);
    }
    Ok(Pose {
        elements,
        positions,
    })
}

/// Parses one XYZ stream per pose and validates that every pose carries
/// the same atom count and element sequence.
pub fn parse_pose_xyz(texts: &[&str]) -> Result<PoseEnsemble, Error> {
    if texts.is_empty() {
        return Err(Error::Empty);
    }
    let mut poses = Vec::with_capacity(texts.len());
    for (i, text) in texts.iter().enumerate() {
        let pose = parse_one_xyz(text, i + 1)?;
        if let Some(first) = poses.first() {
            let first: &Pose = first;
            if pose.elements != first.elements {
                return Err(Error::PoseAtomMismatch(i + 1));
            }
        }
        poses.push(pose);
    }
    Ok(PoseEnsemble { poses })
}

/// Serializes one pose to XYZ.
pub fn format_pose_xyz(pose: &Pose, comment: &str) -> String {
    let mut out = format!("{}\n{}\n", pose.positions.len(), comment);
    for (el, p) in pose.elements.iter().zip(&pose.positions) {
        out.push_str(&format!(
            "{el} {} {} {}\n",
            fmt_sig6(p[0]),
            fmt_sig6(p[1]),
            fmt_sig6(p[2])
        ));
    }
    out
}

/// Parses the embedding TSV format: rectangular, tab-separated floats.
pub fn parse_embeddings(text: &str) -> Result<EmbeddingMatrix, Error> {
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut width = 0usize;
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = raw.split('\t').collect();
        if rows.is_empty() {
            width = fields.len();
        } else if fields.len() != width {
            return Err(Error::RaggedRow {
                line,
                expected: width,
                actual: fields.len(),
            });
        }
        let mut row = Vec::with_capacity(width);
        for field in &fields {
            let v = parse_float(field, line)?;
            if !v.is_finite() {
                return Err(Error::NonFiniteValue(line));
            }
            row.push(v);
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(Error::Empty);
    }
    let n = rows.len();
    let data: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(EmbeddingMatrix {
        values: Mat::from_vec(n, width, data),
    })
}

/// Serializes an embedding matrix to TSV.
pub fn format_embeddings_tsv(embeddings: &EmbeddingMatrix) -> String {
    let mut out = String::new();
    for i in 0..embeddings.n() {
        let row: Vec<String> = embeddings.values.row(i).iter().map(|&v| fmt_sig6(v)).collect();
        out.push_str(&row.join("\t"));
        out.push('\n');
    }
    out
}

/// Deterministic n×d embedding matrix with standard-normal entries, filled
/// row-major from a single [`SeededRng`] stream. Same arguments, same
/// matrix, on every platform.
pub fn synth_embeddings(n: usize, d: usize, seed: u64) -> Result<EmbeddingMatrix, Error> {
    if n == 0 || d == 0 {
        return Err(Error::ZeroDimension);
    }
    let mut rng = SeededRng::new(seed);
    Ok(EmbeddingMatrix {
        values: Mat::from_vec(n, d, rng.normal_vec(n * d)),
    })
}

/// Deterministic pose ensemble: K poses of n_m carbon atoms, each atom at
/// the anchor residue's position plus an isotropic Gaussian offset of scale
/// `spread`. Draw order is pose-outer, atom-inner, three normals per atom.
pub fn synth_pose_ensemble(
    protein: &ProteinStructure,
    anchor_residue: usize,
    n_m: usize,
    k: usize,
    spread: f64,
    seed: u64,
) -> Result<PoseEnsemble, Error> {
    if anchor_residue < 1 || anchor_residue > protein.len() {
        return Err(Error::InvalidAnchor {
            index: anchor_residue,
            n: protein.len(),
        });
    }
    if spread <= 0.0 || spread.is_nan() {
        return Err(Error::NonPositiveSpread);
    }
    if n_m == 0 || k == 0 {
        return Err(Error::ZeroDimension);
    }
    let anchor = protein.residues[anchor_residue - 1].position;
    let mut rng = SeededRng::new(seed);
    let poses = (0..k)
        .map(|_| {
            let mut elements = Vec::with_capacity(n_m);
            let mut positions = Vec::with_capacity(n_m);
            for _ in 0..n_m {
                elements.push("C".to_string());
                positions.push([
                    anchor[0] + spread * rng.normal(),
                    anchor[1] + spread * rng.normal(),
                    anchor[2] + spread * rng.normal(),
                ]);
            }
            Pose {
                elements,
                positions,
            }
        })
        .collect();
    Ok(PoseEnsemble { poses })
}

#[cfg(test)]
// Reference constants below are kept at full 17-digit round-trip precision.
#[allow(clippy::excessive_precision)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn protein_single_record() {
        let p = parse_protein_tsv("1\tALA\t0.0\t0.0\t0.0\n").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.residues[0].label, "ALA");
        assert_eq!(p.residues[0].position, [0.0, 0.0, 0.0]);
    }

    #[test]
    fn protein_preserves_order_and_renumbers_any_start() {
        let p = parse_protein_tsv("1\tALA\t0\t0\t0\n2\tGLY\t1\t0\t0\n").unwrap();
        assert_eq!(p.len(), 2);
        assert_eq!(p.residues[1].label, "GLY");

        let q = parse_protein_tsv("7\tALA\t0\t0\t0\n8\tGLY\t1\t0\t0\n9\tSER\t2\t0\t0\n").unwrap();
        let indices: Vec<usize> = q.residues.iter().map(|r| r.index).collect();
        assert_eq!(indices, vec![1, 2, 3]);
    }

    #[test]
    fn protein_rejects_non_finite_coordinate() {
        let err = parse_protein_tsv("1\tALA\tNaN\t0\t0\n").unwrap_err();
        assert_eq!(err.to_string(), "non-finite coordinate at line 1");
        let err = parse_protein_tsv("1\tALA\t0\tinf\t0\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteCoordinate(1)));
    }

    #[test]
    fn protein_rejects_duplicate_and_gap_indices() {
        let err = parse_protein_tsv("1\tA\t0\t0\t0\n1\tB\t1\t0\t0\n").unwrap_err();
        assert!(matches!(err, Error::DuplicateIndex { line: 2, index: 1 }));
        let err = parse_protein_tsv("1\tA\t0\t0\t0\n3\tB\t1\t0\t0\n").unwrap_err();
        assert!(matches!(err, Error::NonContiguousIndex { line: 2, index: 3, expected: 2 }));
    }

    #[test]
    fn protein_rejects_empty_and_malformed() {
        assert!(matches!(parse_protein_tsv("# only comments\n"), Err(Error::Empty)));
        let err = parse_protein_tsv("1\tALA\t0.0\t0.0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
        let err = parse_protein_tsv("1\tALA\tx\t0\t0\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 1, .. }));
    }

    #[test]
    fn protein_comments_and_blanks_skipped() {
        let p = parse_protein_tsv("# header\n\n1\tALA\t1.5\t-2.25\t0.125\n").unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.residues[0].position, [1.5, -2.25, 0.125]);
    }

    const PDB_THREE_CA: &str = "\
HEADER    TEST
ATOM      1  N   ALA A   1      11.104   6.134  -6.504  1.00  0.00           N
ATOM      2  CA  ALA A   1      11.639   6.071  -5.147  1.00  0.00           C
ATOM      3  CA  GLY A   2       8.121   4.926  -5.113  1.00  0.00           C
ATOM      4  CB  GLY A   2       9.121   5.926  -4.113  1.00  0.00           C
ATOM      5  CA  SER A   3       5.125   4.211  -2.004  1.00  0.00           C
HETATM    6 CA    CA A   4       0.000   0.000   0.000  1.00  0.00          CA
END
";

    #[test]
    fn pdb_extracts_ca_trace() {
        let p = parse_pdb_ca(PDB_THREE_CA).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.residues[0].label, "ALA");
        assert_eq!(p.residues[0].position, [11.639, 6.071, -5.147]);
        assert_eq!(p.residues[2].label, "SER");
        let indices: Vec<usize> = p.residues.iter().map(|r| r.index).collect();
        assert_eq!(indices, vec![1, 2, 3]);
    }

    #[test]
    fn pdb_without_ca_errors() {
        let err = parse_pdb_ca("HETATM    1 FE    FE A   1       0.0     0.0     0.0\n").unwrap_err();
        assert_eq!(err.to_string(), "zero CA atoms");
    }

    #[test]
    fn pdb_ca_beats_cb_for_position() {
        let text = "\
ATOM      1  CA  ALA A   1       1.000   2.000   3.000  1.00  0.00           C
ATOM      2  CB  ALA A   1       9.000   9.000   9.000  1.00  0.00           C
";
        let p = parse_pdb_ca(text).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.residues[0].position, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn pdb_truncated_coordinates_error() {
        let err = parse_pdb_ca("ATOM      1  CA  ALA A   1       1.000\n").unwrap_err();
        assert!(matches!(err, Error::BadCoordinateColumns(1)));
    }

    #[test]
    fn xyz_single_pose() {
        let e = parse_pose_xyz(&["2\nmade by hand\nC 0.0 0.0 0.0\nO 1.0 0.0 0.0\n"]).unwrap();
        assert_eq!(e.n_poses(), 1);
        assert_eq!(e.n_atoms(), 2);
        assert_eq!(e.poses[0].elements, vec!["C", "O"]);
    }

    #[test]
    fn xyz_two_consistent_poses() {
        let a = "1\npose 1\nC 0 0 0\n";
        let b = "1\npose 2\nC 1 1 1\n";
        let e = parse_pose_xyz(&[a, b]).unwrap();
        assert_eq!(e.n_poses(), 2);
        assert_eq!(e.poses[1].positions[0], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn xyz_element_order_mismatch_errors() {
        let a = "2\np\nC 0 0 0\nO 1 0 0\n";
        let b = "2\np\nO 0 0 0\nC 1 0 0\n";
        let err = parse_pose_xyz(&[a, b]).unwrap_err();
        assert!(err.to_string().contains("pose atom mismatch"));
    }

    #[test]
    fn xyz_count_mismatch_errors() {
        let err = parse_pose_xyz(&["3\np\nC 0 0 0\nO 1 0 0\n"]).unwrap_err();
        assert!(matches!(
            err,
            Error::XyzCountMismatch { pose: 1, declared: 3, actual: 2 }
        ));
    }

    #[test]
    fn xyz_round_trip() {
        let text = "2\nwritten\nC 1.50000 0 -2.00000\nO 0.000123457 1.00000e6 0\n";
        let e = parse_pose_xyz(&[text]).unwrap();
        assert_eq!(format_pose_xyz(&e.poses[0], "written"), text);
    }

    #[test]
    fn embeddings_rectangular() {
        let m = parse_embeddings("1.0\t2.0\n3.0\t4.0\n").unwrap();
        assert_eq!((m.n(), m.d()), (2, 2));
        assert_eq!(m.values.data(), &[1.0, 2.0, 3.0, 4.0]);

        let one = parse_embeddings("5.0").unwrap();
        assert_eq!((one.n(), one.d()), (1, 1));
        assert_eq!(one.values.get(0, 0), 5.0);
    }

    #[test]
    fn embeddings_ragged_errors() {
        let err = parse_embeddings("1.0\n1.0\t2.0\n").unwrap_err();
        assert_eq!(err.to_string(), "ragged row at line 2: expected 1 fields, got 2");
    }

    #[test]
    fn embeddings_reject_non_finite_and_empty() {
        let err = parse_embeddings("1.0\tNaN\n").unwrap_err();
        assert!(matches!(err, Error::NonFiniteValue(1)));
        assert!(matches!(parse_embeddings(""), Err(Error::Empty)));
    }

    #[test]
    fn synth_embeddings_deterministic() {
        let a = synth_embeddings(5, 3, 11).unwrap();
        let b = synth_embeddings(5, 3, 11).unwrap();
        assert_eq!(a, b);
        let c = synth_embeddings(5, 3, 12).unwrap();
        assert_ne!(a, c);
        assert!(matches!(synth_embeddings(0, 3, 1), Err(Error::ZeroDimension)));
    }

    #[test]
    fn synth_embeddings_frozen_statistics() {
        // Regression values; the generator is pinned down to the bit, so the
        // sample mean of a large draw is a stable fingerprint.
        let m = synth_embeddings(1000, 8, 42).unwrap();
        let mean: f64 = m.values.iter().sum::<f64>() / 8000.0;
        assert!(mean.abs() < 0.1, "sample mean {mean} too far from 0");
        assert!((mean - -0.010871585116888431).abs() < 1e-9);
        assert!((m.values.get(0, 0) - 0.41471975043153048).abs() < 1e-9);
        assert!((m.values.get(999, 7) - -1.5451316216508924).abs() < 1e-9);
    }

    fn line_protein(n: usize) -> ProteinStructure {
        ProteinStructure {
            residues: (1..=n)
                .map(|i| Residue {
                    index: i,
                    label: "ALA".to_string(),
                    position: [i as f64, 0.0, 0.0],
                })
                .collect(),
        }
    }

    #[test]
    fn synth_poses_cluster_at_anchor() {
        let protein = line_protein(6);
        let tight = synth_pose_ensemble(&protein, 3, 4, 2, 1e-9, 5).unwrap();
        for pose in &tight.poses {
            for p in &pose.positions {
                let d2: f64 = (0..3).map(|c| (p[c] - [3.0, 0.0, 0.0][c]).powi(2)).sum();
                assert!(d2.sqrt() < 1e-6);
            }
        }

        // spread=1, K*n_m=100: the mean position concentrates near the anchor
        // (sd of the mean is spread/sqrt(100) per coordinate).
        let e = synth_pose_ensemble(&protein, 5, 10, 10, 1.0, 7).unwrap();
        let mut mean = [0.0; 3];
        for pose in &e.poses {
            for p in &pose.positions {
                for c in 0..3 {
                    mean[c] += p[c];
                }
            }
        }
        for m in &mut mean {
            *m /= 100.0;
        }
        let off = ((mean[0] - 5.0).powi(2) + mean[1].powi(2) + mean[2].powi(2)).sqrt();
        assert!(off < 3.0 * (1.0 / 100.0f64.sqrt()), "mean offset {off}");
        assert!((off - 0.14363602011962115).abs() < 1e-9, "mean offset {off}");
    }

    #[test]
    fn synth_poses_deterministic_and_validated() {
        let protein = line_protein(3);
        let a = synth_pose_ensemble(&protein, 2, 3, 3, 0.5, 9).unwrap();
        let b = synth_pose_ensemble(&protein, 2, 3, 3, 0.5, 9).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            synth_pose_ensemble(&protein, 4, 3, 3, 0.5, 9),
            Err(Error::InvalidAnchor { index: 4, n: 3 })
        ));
        assert!(matches!(
            synth_pose_ensemble(&protein, 1, 3, 3, 0.0, 9),
            Err(Error::NonPositiveSpread)
        ));
    }

    proptest! {
        #[test]
        fn protein_tsv_round_trip(
            coords in proptest::collection::vec(-1e4f64..1e4, 3..30),
            labels in proptest::collection::vec("[A-Z]{1,3}", 3..30),
        ) {
            let n = coords.len().min(labels.len()) / 3 * 3;
            prop_assume!(n >= 3);
            let residues: Vec<Residue> = (0..n / 3)
                .map(|i| Residue {
                    index: i + 1,
                    label: labels[i].clone(),
                    position: [coords[3 * i], coords[3 * i + 1], coords[3 * i + 2]],
                })
                .collect();
            let original = ProteinStructure { residues };
            // One write-parse cycle rounds coordinates to 6 significant
            // digits; after that the value is an exact fixed point.
            let settled = parse_protein_tsv(&format_protein_tsv(&original)).unwrap();
            for (a, b) in original.residues.iter().zip(&settled.residues) {
                prop_assert_eq!(a.index, b.index);
                prop_assert_eq!(&a.label, &b.label);
                for c in 0..3 {
                    prop_assert!((a.position[c] - b.position[c]).abs() <= 1e-5 * a.position[c].abs().max(1.0));
                }
            }
            let again = parse_protein_tsv(&format_protein_tsv(&settled)).unwrap();
            prop_assert_eq!(&settled, &again);
        }

        #[test]
        fn embeddings_tsv_round_trip(
            rows in 1usize..6,
            cols in 1usize..6,
            seed in 0u64..1000,
        ) {
            let original = synth_embeddings(rows, cols, seed).unwrap();
            let settled = parse_embeddings(&format_embeddings_tsv(&original)).unwrap();
            prop_assert_eq!((settled.n(), settled.d()), (rows, cols));
            for (a, b) in original.values.iter().zip(settled.values.iter()) {
                prop_assert!((a - b).abs() <= 1e-5 * a.abs().max(1e-300));
            }
            let again = parse_embeddings(&format_embeddings_tsv(&settled)).unwrap();
            prop_assert_eq!(&settled, &again);
        }
    }
}
