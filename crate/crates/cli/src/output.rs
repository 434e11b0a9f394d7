//! Output files: CSV tables with `#` headers, reports and their cleanup on
//! failure.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};

/// Column of a CSV table: name and unit.
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

pub const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

/// A table cell. Floats are printed in fixed scientific precision so that
/// reruns are byte-identical.
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self, out: &mut String) {
        match self {
            Cell::F(x) if x.is_nan() => out.push_str("nan"),
            Cell::F(x) => {
                let _ = write!(out, "{x:.9e}");
            }
            Cell::I(x) => {
                let _ = write!(out, "{x}");
            }
            Cell::S(s) => out.push_str(&s.replace([',', '\n', '\r'], ";")),
        }
    }
}

/// Files written by one command, removed again if the command fails.
pub struct OutputSet {
    dir: PathBuf,
    hash: String,
    written: Vec<PathBuf>,
}

impl OutputSet {
    pub fn new(dir: &Path, config_hash: String) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self { dir: dir.to_path_buf(), hash: config_hash, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    /// Registers `name` for cleanup before a writer creates it.
    pub fn claim(&mut self, name: &str) -> PathBuf {
        let p = self.path(name);
        self.written.push(p.clone());
        p
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let p = self.claim(name);
        fs::write(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        Ok(p)
    }

    /// Writes a CSV table. `title` and `notes` become `#` header lines along
    /// with the config hash and one unit line per column.
    pub fn write_csv(
        &mut self,
        name: &str,
        title: &str,
        notes: &[String],
        columns: &[Column],
        rows: &[Vec<Cell>],
    ) -> Result<PathBuf> {
        let mut s = String::new();
        let _ = writeln!(s, "# {title}");
        let _ = writeln!(s, "# config_sha256: {}", self.hash);
        for n in notes {
            let _ = writeln!(s, "# {n}");
        }
        for c in columns {
            let _ = writeln!(s, "# unit {}: {}", c.name, c.unit);
        }
        s.push_str(&columns.iter().map(|c| c.name).collect::<Vec<_>>().join(","));
        s.push('\n');
        for row in rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    s.push(',');
                }
                cell.render(&mut s);
            }
            s.push('\n');
        }
        self.write_bytes(name, s.as_bytes())
    }

    /// Deletes everything this set wrote.
    pub fn discard(&mut self) {
        for p in self.written.drain(..) {
            let _ = fs::remove_file(p);
        }
    }
}

/// Parsed CSV table: header comments and numeric columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut comments = Vec::new();
        let mut lines = text.lines().filter(|l| {
            if let Some(c) = l.strip_prefix('#') {
                comments.push(c.trim().to_string());
                false
            } else {
                true
            }
        });
        let columns = lines.next().unwrap_or_default().split(',').map(str::to_string).collect();
        let rows = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
        Ok(Self { comments, columns, rows })
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[i].parse().unwrap_or(f64::NAN)).collect())
    }
}
