//! Parameter bundle serialization: a single TSV file carrying gamma, beta,
//! the three projections, and the pooling query.
//!
//! ```text
//! # gamma <float>
//! # beta <float>
//! # dims <d> <d_h> <d_v>
//! # block w_q     (d rows x d_h columns)
//! # block w_k     (d rows x d_h columns)
//! # block w_v     (d rows x d_v columns)
//! # block q_pool  (1 row x d columns)
//! ```
//!
//! Floats are written in shortest round-trip form, so saving and reloading
//! reproduces the parameters bit for bit.

use super::{DaaParams, Error};
use crate::mat::Mat;

pub fn format_bundle(params: &DaaParams) -> String {
    let mut out = String::new();
    out.push_str(&format!("# gamma {}\n", params.gamma));
    out.push_str(&format!("# beta {}\n", params.beta));
    out.push_str(&format!(
        "# dims {} {} {}\n",
        params.d(),
        params.d_h(),
        params.d_v()
    ));
    let mut block = |name: &str, rows: usize, cols: usize, get: &dyn Fn(usize, usize) -> f64| {
        out.push_str(&format!("# block {name}\n"));
        for r in 0..rows {
            let row: Vec<String> = (0..cols).map(|c| get(r, c).to_string()).collect();
            out.push_str(&row.join("\t"));
            out.push('\n');
        }
    };
    block("w_q", params.d(), params.d_h(), &|r, c| params.w_q.get(r, c));
    block("w_k", params.d(), params.d_h(), &|r, c| params.w_k.get(r, c));
    block("w_v", params.d(), params.d_v(), &|r, c| params.w_v.get(r, c));
    block("q_pool", 1, params.d(), &|_, c| params.q_pool[c]);
    out
}

struct Lines<'a> {
    iter: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, expected: &str) -> Result<(usize, &'a str), Error> {
        self.iter
            .next()
            .map(|(i, l)| (i + 1, l))
            .ok_or_else(|| Error::MalformedBundle {
                line: 0,
                detail: format!("file ends before {expected}"),
            })
    }
}

fn header_value<'a>(line: &'a str, prefix: &str, lineno: usize) -> Result<&'a str, Error> {
    line.strip_prefix(prefix)
        .map(str::trim)
        .ok_or_else(|| Error::MalformedBundle {
            line: lineno,
            detail: format!("expected `{prefix}...`, got {line:?}"),
        })
}

fn parse_f64(field: &str, lineno: usize) -> Result<f64, Error> {
    let v: f64 = field.trim().parse().map_err(|_| Error::MalformedBundle {
        line: lineno,
        detail: format!("expected a number, got {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::MalformedBundle {
            line: lineno,
            detail: "non-finite value".to_string(),
        });
    }
    Ok(v)
}

fn parse_block(lines: &mut Lines, name: &str, rows: usize, cols: usize) -> Result<Mat, Error> {
    let (lineno, header) = lines.next(&format!("`# block {name}`"))?;
    if header.trim() != format!("# block {name}") {
        return Err(Error::MalformedBundle {
            line: lineno,
            detail: format!("expected `# block {name}`, got {header:?}"),
        });
    }
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let (lineno, row) = lines.next(&format!("a row of block {name}"))?;
        let fields: Vec<&str> = row.split('\t').collect();
        if fields.len() != cols {
            return Err(Error::MalformedBundle {
                line: lineno,
                detail: format!("block {name} row has {} fields, expected {cols}", fields.len()),
            });
        }
        for field in fields {
            data.push(parse_f64(field, lineno)?);
        }
    }
    Ok(Mat::from_vec(rows, cols, data))
}

pub fn parse_bundle(text: &str) -> Result<DaaParams, Error> {
    let mut lines = Lines {
        iter: text.lines().enumerate(),
    };
    let (lineno, line) = lines.next("`# gamma`")?;
    let gamma = parse_f64(header_value(line, "# gamma ", lineno)?, lineno)?;
    let (lineno, line) = lines.next("`# beta`")?;
    let beta = parse_f64(header_value(line, "# beta ", lineno)?, lineno)?;
    let (lineno, line) = lines.next("`# dims`")?;
    let dims: Vec<&str> = header_value(line, "# dims ", lineno)?
        .split_whitespace()
        .collect();
    if dims.len() != 3 {
        return Err(Error::MalformedBundle {
            line: lineno,
            detail: format!("expected three dims, got {}", dims.len()),
        });
    }
    let parse_dim = |s: &str| -> Result<usize, Error> {
        let v: usize = s.parse().map_err(|_| Error::MalformedBundle {
            line: lineno,
            detail: format!("bad dimension {s:?}"),
        })?;
        if v == 0 {
            return Err(Error::MalformedBundle {
                line: lineno,
                detail: "dimensions must be at least 1".to_string(),
            });
        }
        Ok(v)
    };
    let (d, d_h, d_v) = (parse_dim(dims[0])?, parse_dim(dims[1])?, parse_dim(dims[2])?);

    let w_q = parse_block(&mut lines, "w_q", d, d_h)?;
    let w_k = parse_block(&mut lines, "w_k", d, d_h)?;
    let w_v = parse_block(&mut lines, "w_v", d, d_v)?;
    let q_pool = parse_block(&mut lines, "q_pool", 1, d)?.data().to_vec();

    if let Some((i, trailing)) = lines.iter.next() {
        if !trailing.trim().is_empty() {
            return Err(Error::MalformedBundle {
                line: i + 1,
                detail: format!("unexpected trailing content {trailing:?}"),
            });
        }
    }

    let params = DaaParams {
        w_q,
        w_k,
        w_v,
        q_pool,
        gamma,
        beta,
    };
    params.validate()?;
    Ok(params)
}
