//! Bradley-Terry ranking of two-alternative forced-choice responses.

use std::collections::VecDeque;
use std::fmt;
use std::io::Read;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which side of a pair the rater picked.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    A,
    B,
}

/// One forced-choice response.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Response {
    pub item_id: String,
    pub method_a: String,
    pub method_b: String,
    pub choice: Choice,
}

/// Win counts between methods; `wins[i][j]` is how often method `i` beat method `j`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PairwiseTally {
    methods: Vec<String>,
    wins: Vec<Vec<u64>>,
}

impl PairwiseTally {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_matrix(methods: Vec<String>, wins: Vec<Vec<u64>>) -> Result<Self> {
        let n = methods.len();
        if wins.len() != n || wins.iter().any(|r| r.len() != n) {
            return Err(Error::DimensionMismatch {
                context: "win matrix",
                expected: format!("{n}x{n}"),
                found: format!("{} rows", wins.len()),
            });
        }
        if (0..n).any(|i| wins[i][i] != 0) {
            return Err(Error::Format("win matrix diagonal must be zero".into()));
        }
        Ok(Self { methods, wins })
    }

    pub fn methods(&self) -> &[String] {
        &self.methods
    }

    pub fn wins(&self) -> &[Vec<u64>] {
        &self.wins
    }

    pub fn len(&self) -> usize {
        self.methods.len()
    }

    pub fn is_empty(&self) -> bool {
        self.methods.is_empty()
    }

    pub fn index_of(&self, method: &str) -> Option<usize> {
        self.methods.iter().position(|m| m == method)
    }

    fn index_or_insert(&mut self, method: &str) -> usize {
        if let Some(i) = self.index_of(method) {
            return i;
        }
        self.methods.push(method.to_string());
        for row in &mut self.wins {
            row.push(0);
        }
        self.wins.push(vec![0; self.methods.len()]);
        self.methods.len() - 1
    }

    /// Records one win, registering unseen methods in first-seen order.
    pub fn record(&mut self, winner: &str, loser: &str) {
        let w = self.index_or_insert(winner);
        let l = self.index_or_insert(loser);
        self.wins[w][l] += 1;
    }

    /// Total number of comparisons.
    pub fn total(&self) -> u64 {
        self.wins.iter().flatten().sum()
    }

    /// Every count multiplied by `k`.
    pub fn scaled(&self, k: u64) -> Self {
        Self {
            methods: self.methods.clone(),
            wins: self.wins.iter().map(|r| r.iter().map(|v| v * k).collect()).collect(),
        }
    }
}

/// Accumulates responses into a tally.
pub fn ingest_responses(rows: impl IntoIterator<Item = Response>) -> Result<PairwiseTally> {
    let mut tally = PairwiseTally::new();
    for (i, r) in rows.into_iter().enumerate() {
        let row = i + 1;
        if r.method_a.trim().is_empty() || r.method_b.trim().is_empty() {
            return Err(Error::Parse {
                row,
                message: "method names must be non-empty".into(),
            });
        }
        if r.method_a == r.method_b {
            return Err(Error::Parse {
                row,
                message: format!("method `{}` compared against itself", r.method_a),
            });
        }
        match r.choice {
            Choice::A => tally.record(&r.method_a, &r.method_b),
            Choice::B => tally.record(&r.method_b, &r.method_a),
        }
    }
    Ok(tally)
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    item_id: String,
    method_a: String,
    method_b: String,
    choice: String,
}

/// Reads `item_id,method_a,method_b,choice` rows. `choice` is `a`/`b` (case-insensitive) or
/// the name of the chosen method. Row numbers in errors count data rows from 1.
pub fn read_responses_csv(reader: impl Read) -> Result<Vec<Response>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    for col in ["item_id", "method_a", "method_b", "choice"] {
        if !headers.iter().any(|h| h == col) {
            return Err(Error::Parse {
                row: 0,
                message: format!("missing column `{col}`"),
            });
        }
    }
    let mut out = Vec::new();
    for (i, rec) in rdr.deserialize::<CsvRow>().enumerate() {
        let row = i + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        let choice = match rec.choice.to_ascii_lowercase().as_str() {
            "a" => Choice::A,
            "b" => Choice::B,
            _ if rec.choice == rec.method_a => Choice::A,
            _ if rec.choice == rec.method_b => Choice::B,
            other => {
                return Err(Error::Parse {
                    row,
                    message: format!("choice `{other}` is neither a nor b"),
                })
            }
        };
        out.push(Response {
            item_id: rec.item_id,
            method_a: rec.method_a,
            method_b: rec.method_b,
            choice,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BtOptions<T> {
    pub max_iters: usize,
    /// Stop once the largest relative score change falls below this.
    pub tol: T,
    /// Add half a win to every ordered pair before fitting.
    pub smoothing: bool,
}

impl<T: Scalar> Default for BtOptions<T> {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            tol: T::lit(1e-10),
            smoothing: false,
        }
    }
}

/// Bradley-Terry strengths normalized to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BtScores<T> {
    pub methods: Vec<String>,
    pub scores: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
}

fn reachable(n: usize, start: usize, edge: impl Fn(usize, usize) -> bool) -> Vec<bool> {
    let mut seen = vec![false; n];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(i) = queue.pop_front() {
        for j in 0..n {
            if !seen[j] && edge(i, j) {
                seen[j] = true;
                queue.push_back(j);
            }
        }
    }
    seen
}

fn check_identifiable(tally: &PairwiseTally) -> Result<()> {
    let n = tally.len();
    let w = &tally.wins;
    let names = |mask: &[bool], want: bool| -> Vec<String> {
        (0..n)
            .filter(|&i| mask[i] == want)
            .map(|i| tally.methods[i].clone())
            .collect()
    };
    let connected = reachable(n, 0, |i, j| w[i][j] + w[j][i] > 0);
    if connected.iter().any(|c| !c) {
        return Err(Error::Disconnected(names(&connected, false)));
    }
    let winless: Vec<bool> = (0..n).map(|i| w[i].iter().sum::<u64>() == 0).collect();
    if winless.iter().any(|z| *z) {
        return Err(Error::ZeroWins(names(&winless, true)));
    }
    // Edge i -> j when i lost to j. A closed set of this graph never loses to the outside.
    let closures: Vec<Vec<bool>> = (0..n).map(|s| reachable(n, s, |i, j| w[j][i] > 0)).collect();
    if let Some(closed) = closures
        .iter()
        .filter(|c| c.iter().any(|v| !v))
        .min_by_key(|c| c.iter().filter(|v| **v).count())
    {
        return Err(Error::NonIdentifiable(names(closed, true)));
    }
    Ok(())
}

/// Maximum-likelihood Bradley-Terry scores by the minorize-maximize fixed point
/// `p_i ← W_i / Σ_j n_ij / (p_i + p_j)`.
pub fn bt_fit<T: Scalar>(tally: &PairwiseTally, opts: &BtOptions<T>) -> Result<BtScores<T>> {
    let n = tally.len();
    if n == 0 {
        return Ok(BtScores {
            methods: vec![],
            scores: vec![],
            iterations: 0,
            converged: true,
        });
    }
    let half = if opts.smoothing { T::lit(0.5) } else { T::zero() };
    let wins: Vec<Vec<T>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        T::zero()
                    } else {
                        T::lit(tally.wins[i][j] as f64) + half
                    }
                })
                .collect()
        })
        .collect();
    if !opts.smoothing {
        check_identifiable(tally)?;
    }
    let total_wins: Vec<T> = wins.iter().map(|r| r.iter().copied().sum()).collect();
    let mut p = vec![T::one() / T::count(n); n];
    let mut iterations = 0;
    let mut converged = n == 1;
    while !converged && iterations < opts.max_iters {
        iterations += 1;
        let mut next: Vec<T> = (0..n)
            .map(|i| {
                let denom: T = (0..n)
                    .filter(|&j| j != i)
                    .map(|j| (wins[i][j] + wins[j][i]) / (p[i] + p[j]))
                    .sum();
                total_wins[i] / denom
            })
            .collect();
        let sum: T = next.iter().copied().sum();
        next.iter_mut().for_each(|v| *v /= sum);
        let change = next
            .iter()
            .zip(&p)
            .map(|(a, b)| ((*a - *b) / *b).abs())
            .fold(T::zero(), T::max);
        p = next;
        converged = change < opts.tol;
    }
    if !converged {
        log::warn!("Bradley-Terry fit stopped after {iterations} iterations without converging");
    }
    Ok(BtScores {
        methods: tally.methods.clone(),
        scores: p,
        iterations,
        converged,
    })
}

/// `Σ_{i≠j} w_ij · ln(p_i / (p_i + p_j))`.
pub fn log_likelihood<T: Scalar>(tally: &PairwiseTally, scores: &[T]) -> T {
    let n = tally.len();
    let mut ll = T::zero();
    for i in 0..n {
        for j in 0..n {
            let w = tally.wins[i][j];
            if i != j && w > 0 {
                ll += T::lit(w as f64) * (scores[i] / (scores[i] + scores[j])).ln();
            }
        }
    }
    ll
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingRow {
    pub method: String,
    pub score: f64,
}

/// Methods by descending score; ties keep first-seen order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankingTable {
    pub rows: Vec<RankingRow>,
}

impl fmt::Display for RankingTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let header = "Method";
        let width = self
            .rows
            .iter()
            .map(|r| r.method.chars().count())
            .chain([header.len()])
            .max()
            .unwrap_or(0);
        writeln!(f, "{header:<width$}  B-T Score")?;
        for r in &self.rows {
            writeln!(f, "{:<width$}  {:.4}", r.method, r.score)?;
        }
        Ok(())
    }
}

pub fn report<T: Scalar>(scores: &BtScores<T>) -> RankingTable {
    let mut rows: Vec<RankingRow> = scores
        .methods
        .iter()
        .zip(&scores.scores)
        .map(|(m, s)| RankingRow {
            method: m.clone(),
            score: s.as_f64(),
        })
        .collect();
    rows.sort_by(|a, b| b.score.partial_cmp(&a.score).unwrap_or(std::cmp::Ordering::Equal));
    RankingTable { rows }
}

/// Tally whose counts follow `n_pair · p_i / (p_i + p_j)` for every ordered pair, rounded
/// to integers.
pub fn expected_tally(methods: &[&str], strengths: &[f64], comparisons_per_pair: u64) -> PairwiseTally {
    let n = methods.len();
    let wins = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    if i == j {
                        0
                    } else {
                        let share = strengths[i] / (strengths[i] + strengths[j]);
                        (comparisons_per_pair as f64 * share).round() as u64
                    }
                })
                .collect()
        })
        .collect();
    PairwiseTally {
        methods: methods.iter().map(|m| m.to_string()).collect(),
        wins,
    }
}
