//! Versioned text checkpoints for trained factor models.
//!
//! Layout: the version header, `key value` metadata lines (scope, training
//! config), one line of user ids and one of item ids, then the rows of P
//! and Q, one row per line. Floats are printed in Rust's shortest
//! round-trip form, so save then load reproduces the factors bitwise.
//! Training-loss history is deliberately not checkpointed; it documents a
//! run, not the model.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::DMatrix;
use recaudit_core::mf::{MfConfig, MfError, MfModel};
use thiserror::Error;

pub const FORMAT_VERSION: &str = "recaudit-mf-v1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("unsupported checkpoint version '{0}'")]
    WrongVersion(String),
    #[error("checkpoint line {line}: {what}")]
    Malformed { line: usize, what: &'static str },
    #[error("checkpoint ends early: missing {what}")]
    Truncated { what: &'static str },
    #[error(transparent)]
    Model(#[from] MfError),
}

fn io_err(path: &Path, source: std::io::Error) -> CheckpointError {
    CheckpointError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes `model` to `path`. `scope` is a single caller-chosen token naming
/// what the model was trained on (for example `full` or `k2`), stored so a
/// later load can refuse a mismatched cache hit.
pub fn save_model(model: &MfModel, scope: &str, path: &Path) -> Result<(), CheckpointError> {
    debug_assert!(
        !scope.is_empty() && !scope.chars().any(char::is_whitespace),
        "scope must be a single token"
    );
    let cfg = &model.config;
    let mut out = String::new();
    out.push_str(FORMAT_VERSION);
    out.push('\n');
    let _ = writeln!(out, "scope {scope}");
    let _ = writeln!(out, "dim {}", cfg.dim);
    let _ = writeln!(out, "reg {}", cfg.reg);
    let _ = writeln!(out, "epochs {}", cfg.epochs);
    let _ = writeln!(out, "lr {}", cfg.learning_rate);
    let _ = writeln!(out, "seed {}", cfg.seed);
    let _ = writeln!(out, "users {}", model.n_users());
    let _ = writeln!(out, "items {}", model.n_items());
    push_ids(&mut out, model.user_ids());
    push_ids(&mut out, model.item_ids());
    push_rows(&mut out, &model.p);
    push_rows(&mut out, &model.q);
    std::fs::write(path, out).map_err(|e| io_err(path, e))
}

fn push_ids(out: &mut String, ids: &[u32]) {
    for (i, id) in ids.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{id}");
    }
    out.push('\n');
}

fn push_rows(out: &mut String, m: &DMatrix<f64>) {
    for r in 0..m.nrows() {
        for c in 0..m.ncols() {
            if c > 0 {
                out.push(' ');
            }
            let _ = write!(out, "{}", m[(r, c)]);
        }
        out.push('\n');
    }
}

/// Reads a model back, returning it with the scope token it was saved under.
pub fn load_model(path: &Path) -> Result<(MfModel, String), CheckpointError> {
    let text = std::fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();

    let (_, version) = lines.next().ok_or(CheckpointError::Truncated {
        what: "version header",
    })?;
    if version != FORMAT_VERSION {
        return Err(CheckpointError::WrongVersion(version.into()));
    }

    let scope = meta_value(&mut lines, "scope")?.to_owned();
    let dim: usize = parse_meta(&mut lines, "dim")?;
    let reg: f64 = parse_meta(&mut lines, "reg")?;
    let epochs: usize = parse_meta(&mut lines, "epochs")?;
    let learning_rate: f64 = parse_meta(&mut lines, "lr")?;
    let seed: u64 = parse_meta(&mut lines, "seed")?;
    let n_users: usize = parse_meta(&mut lines, "users")?;
    let n_items: usize = parse_meta(&mut lines, "items")?;

    let user_ids = parse_id_line(&mut lines, n_users, "user ids")?;
    let item_ids = parse_id_line(&mut lines, n_items, "item ids")?;
    let p = parse_matrix(&mut lines, n_users, dim, "P row")?;
    let q = parse_matrix(&mut lines, n_items, dim, "Q row")?;
    if let Some((idx, line)) = lines.next() {
        if !line.trim().is_empty() {
            return Err(CheckpointError::Malformed {
                line: idx + 1,
                what: "trailing content after factor rows",
            });
        }
    }

    let config = MfConfig {
        dim,
        reg,
        epochs,
        learning_rate,
        seed,
    };
    let model = MfModel::from_parts(p, q, config, user_ids, item_ids)?;
    Ok((model, scope))
}

type Lines<'a> = std::iter::Enumerate<std::str::Lines<'a>>;

fn meta_line<'a>(lines: &mut Lines<'a>, key: &'static str) -> Result<(usize, &'a str), CheckpointError> {
    let (idx, line) = lines
        .next()
        .ok_or(CheckpointError::Truncated { what: key })?;
    match line.split_once(' ') {
        Some((k, v)) if k == key => Ok((idx + 1, v)),
        _ => Err(CheckpointError::Malformed {
            line: idx + 1,
            what: key,
        }),
    }
}

fn meta_value<'a>(lines: &mut Lines<'a>, key: &'static str) -> Result<&'a str, CheckpointError> {
    meta_line(lines, key).map(|(_, v)| v)
}

fn parse_meta<T: FromStr>(lines: &mut Lines, key: &'static str) -> Result<T, CheckpointError> {
    let (line, v) = meta_line(lines, key)?;
    v.parse()
        .map_err(|_| CheckpointError::Malformed { line, what: key })
}

fn parse_id_line(
    lines: &mut Lines,
    expected: usize,
    what: &'static str,
) -> Result<Vec<u32>, CheckpointError> {
    let (idx, line) = lines
        .next()
        .ok_or(CheckpointError::Truncated { what })?;
    let ids: Result<Vec<u32>, _> = line.split_whitespace().map(str::parse).collect();
    let ids = ids.map_err(|_| CheckpointError::Malformed {
        line: idx + 1,
        what,
    })?;
    if ids.len() != expected {
        return Err(CheckpointError::Malformed {
            line: idx + 1,
            what,
        });
    }
    Ok(ids)
}

fn parse_matrix(
    lines: &mut Lines,
    nrows: usize,
    ncols: usize,
    what: &'static str,
) -> Result<DMatrix<f64>, CheckpointError> {
    let mut flat = Vec::with_capacity(nrows * ncols);
    for _ in 0..nrows {
        let (idx, line) = lines
            .next()
            .ok_or(CheckpointError::Truncated { what })?;
        let before = flat.len();
        for tok in line.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| CheckpointError::Malformed {
                line: idx + 1,
                what,
            })?;
            flat.push(v);
        }
        if flat.len() - before != ncols {
            return Err(CheckpointError::Malformed {
                line: idx + 1,
                what,
            });
        }
    }
    Ok(DMatrix::from_row_slice(nrows, ncols, &flat))
}
