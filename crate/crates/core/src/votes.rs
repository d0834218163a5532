//! Labeling-function outputs: single votes and the n×m vote matrix.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ABSTAIN: i32 = -1;

/// One LF output: `-1` for abstain, otherwise a class index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vote(pub(crate) i32);

impl Vote {
    pub const ABSTAIN: Vote = Vote(ABSTAIN);

    pub fn class(c: usize) -> Self {
        Vote(c as i32)
    }

    /// Checks the raw value against a class count.
    pub fn checked(raw: i64, k: usize) -> Result<Self> {
        if raw == ABSTAIN as i64 || (raw >= 0 && (raw as u64) < k as u64) {
            Ok(Vote(raw as i32))
        } else {
            Err(Error::VoteOutOfRange { vote: raw, k })
        }
    }

    pub fn raw(self) -> i32 {
        self.0
    }

    pub fn is_abstain(self) -> bool {
        self.0 == ABSTAIN
    }

    pub fn as_class(self) -> Option<usize> {
        (self.0 >= 0).then_some(self.0 as usize)
    }
}

/// Row-major n×m matrix of votes, one column per labeling function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteMatrix {
    n: usize,
    m: usize,
    votes: Vec<i32>,
    lf_names: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    n: usize,
    m: usize,
    lf_names: Vec<String>,
}

impl VoteMatrix {
    pub fn new(n: usize, lf_names: Vec<String>, votes: Vec<i32>) -> Result<Self> {
        let m = lf_names.len();
        if votes.len() != n * m {
            return Err(Error::Shape(format!("{} votes for a {n}x{m} matrix", votes.len())));
        }
        if let Some(&bad) = votes.iter().find(|&&v| v < ABSTAIN) {
            return Err(Error::VoteOutOfRange { vote: bad as i64, k: 0 });
        }
        Ok(Self { n, m, votes, lf_names })
    }

    /// Builds a matrix from rows, naming columns `lf0..lf{m-1}`.
    pub fn from_rows(rows: &[Vec<i32>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(Error::Shape("ragged rows".into()));
        }
        let names = (0..m).map(|a| format!("lf{a}")).collect();
        Self::new(rows.len(), names, rows.concat())
    }

    pub fn empty(lf_names: Vec<String>) -> Self {
        Self { n: 0, m: lf_names.len(), votes: Vec::new(), lf_names }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn lf_names(&self) -> &[String] {
        &self.lf_names
    }

    pub fn get(&self, i: usize, a: usize) -> i32 {
        self.votes[i * self.m + a]
    }

    pub fn row(&self, i: usize) -> &[i32] {
        &self.votes[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[i32]> {
        (0..self.n).map(move |i| self.row(i))
    }

    pub fn column(&self, a: usize) -> impl Iterator<Item = i32> + '_ {
        (0..self.n).map(move |i| self.get(i, a))
    }

    pub fn as_slice(&self) -> &[i32] {
        &self.votes
    }

    /// True when every vote is abstain or a class index below `k`.
    pub fn validate(&self, k: usize) -> Result<()> {
        match self.votes.iter().find(|&&v| v != ABSTAIN && (v < 0 || v as usize >= k)) {
            Some(&v) => Err(Error::VoteOutOfRange { vote: v as i64, k }),
            None => Ok(()),
        }
    }

    pub fn is_covered(&self, i: usize) -> bool {
        self.row(i).iter().any(|&v| v != ABSTAIN)
    }

    /// Rows reordered so that output row `j` is input row `order[j]`.
    pub fn select_rows(&self, order: &[usize]) -> Self {
        let mut votes = Vec::with_capacity(order.len() * self.m);
        for &i in order {
            votes.extend_from_slice(self.row(i));
        }
        Self { n: order.len(), m: self.m, votes, lf_names: self.lf_names.clone() }
    }

    /// Columns reordered so that output column `j` is input column `order[j]`.
    pub fn select_columns(&self, order: &[usize]) -> Self {
        let mut votes = Vec::with_capacity(self.n * order.len());
        for i in 0..self.n {
            votes.extend(order.iter().map(|&a| self.get(i, a)));
        }
        let lf_names = order.iter().map(|&a| self.lf_names[a].clone()).collect();
        Self { n: self.n, m: order.len(), votes, lf_names }
    }

    /// Side-by-side concatenation of two matrices over the same points.
    pub fn hstack(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::Shape(format!("row counts {} and {}", self.n, other.n)));
        }
        let mut votes = Vec::with_capacity(self.n * (self.m + other.m));
        for i in 0..self.n {
            votes.extend_from_slice(self.row(i));
            votes.extend_from_slice(other.row(i));
        }
        let mut lf_names = self.lf_names.clone();
        lf_names.extend(other.lf_names.iter().cloned());
        Ok(Self { n: self.n, m: self.m + other.m, votes, lf_names })
    }

    /// Header line `{"n":..,"m":..,"lf_names":[..]}` followed by one line of
    /// space-separated votes per point.
    pub fn to_text(&self) -> String {
        let header = Header { n: self.n, m: self.m, lf_names: self.lf_names.clone() };
        let mut out = serde_json::to_string(&header).expect("header serializes");
        out.push('\n');
        for row in self.rows() {
            for (a, v) in row.iter().enumerate() {
                if a > 0 {
                    out.push(' ');
                }
                let _ = write!(out, "{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header: Header = lines
            .next()
            .ok_or_else(|| Error::Shape("missing header line".into()))
            .and_then(|l| serde_json::from_str(l).map_err(|e| Error::Shape(format!("header: {e}"))))?;
        if header.lf_names.len() != header.m {
            return Err(Error::Shape("header m disagrees with lf_names".into()));
        }
        let mut votes = Vec::with_capacity(header.n * header.m);
        let mut rows = 0;
        for (lineno, line) in lines.enumerate() {
            if rows == header.n && line.trim().is_empty() {
                continue;
            }
            let before = votes.len();
            for tok in line.split_whitespace() {
                let v: i32 = tok.parse().map_err(|_| Error::Shape(format!("line {}: bad vote {tok:?}", lineno + 2)))?;
                votes.push(v);
            }
            if votes.len() - before != header.m {
                return Err(Error::Shape(format!("line {}: expected {} votes", lineno + 2, header.m)));
            }
            rows += 1;
        }
        if rows != header.n {
            return Err(Error::Shape(format!("expected {} rows, found {rows}", header.n)));
        }
        Self::new(header.n, header.lf_names, votes)
    }
}
