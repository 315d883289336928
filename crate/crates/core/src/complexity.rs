//! Proposal-count cost model for segment-, window- and sector-based relation
//! prediction over a pair intersection of `L` frames.
//!
//! `l` is the segment length, the minimum window size and the sector length;
//! `s` is the stride. All inputs satisfy `0 < s < l <= L`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct CostInput {
    #[serde(rename = "L")]
    pub big_l: u64,
    pub l: u64,
    pub s: u64,
}

fn ceil_div(num: u64, den: u64) -> u64 {
    num.div_ceil(den)
}

impl CostInput {
    pub fn new(big_l: u64, l: u64, s: u64) -> Result<Self> {
        if s == 0 || s >= l || l > big_l {
            return Err(Error::CostConstraint { big_l, l, s });
        }
        Ok(CostInput { big_l, l, s })
    }

    fn f(&self) -> (f64, f64, f64) {
        (self.big_l as f64, self.l as f64, self.s as f64)
    }
}

/// `ceil((L - l + s) / s)`
pub fn count_segments(c: &CostInput) -> u64 {
    ceil_div(c.big_l - c.l + c.s, c.s)
}

/// `sum_{k=1}^{floor(L/l)} ceil((L - k l + s) / s)`, negative terms clamped to 0.
pub fn count_windows(c: &CostInput) -> u64 {
    (1..=c.big_l / c.l)
        .map(|k| {
            let num = (c.big_l + c.s).saturating_sub(k * c.l);
            ceil_div(num, c.s)
        })
        .sum()
}

/// `ceil(L / l)`.
pub fn count_sectors(c: &CostInput) -> u64 {
    ceil_div(c.big_l, c.l)
}

/// Unrounded sector count `L / l`.
pub fn sector_ratio(c: &CostInput) -> f64 {
    c.big_l as f64 / c.l as f64
}

pub fn segment_upper_bound(c: &CostInput) -> f64 {
    let (big_l, l, s) = c.f();
    (big_l - l + 2.0 * s) / s
}

/// Window cost bound as tabulated: `(L^2/s - L^2/(2 l^2 s) - L/(2 l s) + 2L)^2`.
pub fn window_upper_bound(c: &CostInput) -> f64 {
    let (big_l, l, s) = c.f();
    let inner = big_l * big_l / s - big_l * big_l / (2.0 * l * l * s) - big_l / (2.0 * l * s)
        + 2.0 * big_l;
    inner * inner
}

pub fn sector_upper_bound(c: &CostInput) -> f64 {
    sector_ratio(c)
}

/// `2L / l`, the segment count at `s = l / 2`.
pub fn segment_typical(c: &CostInput) -> f64 {
    let (big_l, l, _) = c.f();
    2.0 * big_l / l
}

/// `(2L^2/l - L^2/l^3 - L/l^2 + 2L)^2`, the window cost at `s = l / 2`.
pub fn window_typical(c: &CostInput) -> f64 {
    let (big_l, l, _) = c.f();
    let inner = 2.0 * big_l * big_l / l - big_l * big_l / (l * l * l) - big_l / (l * l) + 2.0 * big_l;
    inner * inner
}

pub fn sector_typical(c: &CostInput) -> f64 {
    sector_ratio(c)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MethodCost {
    pub method: &'static str,
    pub exact: u64,
    pub upper_bound: f64,
    pub typical: f64,
    pub big_o: &'static str,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostRow {
    pub input: CostInput,
    pub segments: u64,
    pub windows: u64,
    /// Relation prediction over window pairs grows as the square of the
    /// window count.
    pub window_pairs: u64,
    pub sectors: u64,
    pub sector_ratio: f64,
    pub methods: [MethodCost; 3],
}

impl CostRow {
    pub fn new(input: CostInput) -> Self {
        let segments = count_segments(&input);
        let windows = count_windows(&input);
        let sectors = count_sectors(&input);
        CostRow {
            input,
            segments,
            windows,
            window_pairs: windows * windows,
            sectors,
            sector_ratio: sector_ratio(&input),
            methods: [
                MethodCost {
                    method: "segment",
                    exact: segments,
                    upper_bound: segment_upper_bound(&input),
                    typical: segment_typical(&input),
                    big_o: "O(L)",
                },
                MethodCost {
                    method: "window",
                    exact: windows,
                    upper_bound: window_upper_bound(&input),
                    typical: window_typical(&input),
                    big_o: "O(L^4)",
                },
                MethodCost {
                    method: "tspn",
                    exact: sectors,
                    upper_bound: sector_upper_bound(&input),
                    typical: sector_typical(&input),
                    big_o: "O(L)",
                },
            ],
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct CostTable {
    pub rows: Vec<CostRow>,
}

pub fn emit_cost_table(inputs: &[CostInput]) -> CostTable {
    CostTable {
        rows: inputs.iter().copied().map(CostRow::new).collect(),
    }
}

impl CostTable {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            let CostInput { big_l, l, s } = row.input;
            let _ = writeln!(out, "L={big_l} l={l} s={s}");
            let _ = writeln!(
                out,
                "  {:<8} {:>10} {:>16} {:>16} {:>8}",
                "method", "exact", "upper_bound", "typical(s=l/2)", "big_o"
            );
            for m in &row.methods {
                let _ = writeln!(
                    out,
                    "  {:<8} {:>10} {:>16.3} {:>16.3} {:>8}",
                    m.method, m.exact, m.upper_bound, m.typical, m.big_o
                );
            }
            let _ = writeln!(
                out,
                "  exact counts: N_s={} N_w={} N_t={} (L/l={:.3}), window pairs N_w^2={}",
                row.segments, row.windows, row.sectors, row.sector_ratio, row.window_pairs
            );
        }
        out
    }
}

/// Every valid `(L, l, s)` in the given inclusive ranges.
pub fn sweep(
    big_l: (u64, u64, u64),
    l: (u64, u64, u64),
    s: (u64, u64, u64),
) -> Vec<CostInput> {
    let range = |(lo, hi, step): (u64, u64, u64)| {
        let step = step.max(1);
        (lo..=hi).step_by(step as usize)
    };
    let mut out = Vec::new();
    for big in range(big_l) {
        for ll in range(l) {
            for ss in range(s) {
                if let Ok(c) = CostInput::new(big, ll, ss) {
                    out.push(c);
                }
            }
        }
    }
    out
}
