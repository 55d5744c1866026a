//! Report containers and their on-disk form: CSV tables, a gnuplot script,
//! a check list and optional DOT files.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

/// Shortest round-trip formatting, so reports are byte-for-byte reproducible.
pub fn fmt(v: f64) -> String {
    format!("{v:e}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.columns.len(), "row width in table {}", self.name);
        self.rows.push(row);
    }

    pub fn file_name(&self) -> String {
        format!("{}.csv", self.name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Column index by name.
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// One asserted tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub bound: String,
    pub passed: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, value: f64, bound: impl Into<String>, passed: bool) -> Self {
        Self {
            name: name.into(),
            value,
            bound: bound.into(),
            passed,
        }
    }

    pub fn below(name: impl Into<String>, value: f64, max: f64) -> Self {
        Self::new(name, value, format!("< {}", fmt(max)), value < max)
    }

    pub fn within(name: impl Into<String>, value: f64, lo: f64, hi: f64) -> Self {
        Self::new(name, value, format!("[{}, {}]", fmt(lo), fmt(hi)), value >= lo && value <= hi)
    }

    pub fn line(&self) -> String {
        let tag = if self.passed { "PASS" } else { "FAIL" };
        format!("{tag} {} = {} (want {})", self.name, fmt(self.value), self.bound)
    }
}

/// A data series for the generated plot script.
#[derive(Debug, Clone, PartialEq)]
pub struct Plot {
    pub title: String,
    pub table: String,
    pub x: String,
    pub y: String,
    pub err: Option<String>,
    pub logscale: bool,
    /// Restrict to rows whose column `.0` equals `.1`.
    pub filter: Option<(String, String)>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Report {
    pub name: String,
    pub tables: Vec<Table>,
    pub checks: Vec<Check>,
    pub plots: Vec<Plot>,
    /// Verbatim text artifacts `(file name, contents)`.
    pub files: Vec<(String, String)>,
    /// DOT graphs `(stem, contents)`, written only when a DOT directory is given.
    pub graphs: Vec<(String, String)>,
    /// Points excluded from fits, with the reason.
    pub flagged: Vec<String>,
}

impl Report {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.to_string(),
            ..Self::default()
        }
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(s, "{}", c.line());
        }
        for f in &self.flagged {
            let _ = writeln!(s, "FLAGGED {f}");
        }
        s
    }

    pub fn checks_table(&self) -> Table {
        let mut t = Table::new("checks", &["check", "value", "bound", "passed"]);
        for c in &self.checks {
            t.push(vec![c.name.clone(), fmt(c.value), c.bound.clone(), c.passed.to_string()]);
        }
        t
    }

    pub fn gnuplot_script(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "set datafile separator ','");
        let _ = writeln!(s, "set terminal pngcairo size 900,{}", 400 * self.plots.len().max(1));
        let _ = writeln!(s, "set output '{}.png'", self.name);
        if self.plots.len() > 1 {
            let _ = writeln!(s, "set multiplot layout {},1", self.plots.len());
        }
        for p in &self.plots {
            let Some(t) = self.table(&p.table) else { continue };
            let col = |c: &str| t.column(c).map(|i| i + 1).unwrap_or(1);
            let (x, y) = (col(&p.x), col(&p.y));
            let _ = writeln!(s, "set title '{}'", p.title);
            let _ = writeln!(s, "set xlabel '{}'\nset ylabel '{}'", p.x, p.y);
            let _ = writeln!(s, "{}set logscale xy", if p.logscale { "" } else { "un" });
            let select = match &p.filter {
                Some((c, v)) => format!("(strcol({}) eq '{}' ? ${} : NaN)", col(c), v, y),
                None => format!("{y}"),
            };
            let using = match &p.err {
                Some(e) => format!("{x}:{select}:{} with yerrorbars", col(e)),
                None => format!("{x}:{select} with linespoints"),
            };
            let _ = writeln!(s, "plot '{}' every ::1 using {using} notitle", t.file_name());
        }
        if self.plots.len() > 1 {
            let _ = writeln!(s, "unset multiplot");
        }
        s
    }

    /// Writes every artifact into `out` (and DOT files into `dot_dir`).
    pub fn write(&self, out: &Path, dot_dir: Option<&Path>) -> std::io::Result<Vec<PathBuf>> {
        fs::create_dir_all(out)?;
        let mut written = Vec::new();
        let mut put = |dir: &Path, name: &str, text: &str| -> std::io::Result<()> {
            let p = dir.join(name);
            fs::write(&p, text)?;
            written.push(p);
            Ok(())
        };
        for t in &self.tables {
            put(out, &t.file_name(), &t.to_csv())?;
        }
        put(out, "checks.csv", &self.checks_table().to_csv())?;
        if !self.plots.is_empty() {
            put(out, &format!("{}.gp", self.name), &self.gnuplot_script())?;
        }
        for (name, text) in &self.files {
            put(out, name, text)?;
        }
        if let Some(d) = dot_dir {
            fs::create_dir_all(d)?;
            for (stem, text) in &self.graphs {
                put(d, &format!("{stem}.dot"), text)?;
            }
        }
        Ok(written)
    }
}
