//! Temporal sectors: quantizing a pair's shared frames into `k` sectors,
//! labeling sectors from ground-truth spans, and decoding sector activations
//! back into frame spans.

use crate::data::{RelationInstance, Span, Trajectory};
use crate::error::{Error, Result};
use crate::geometry::temporal_overlap;

/// `k` contiguous sectors tiling a span. Sector `i` covers
/// `[b_i, b_{i+1})` with `b_i = begin + round(i * len / k)`, rounding half up.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorGrid {
    span: Span,
    boundaries: Vec<u32>,
}

impl SectorGrid {
    /// Fails with [`Error::DegenerateGrid`] when the span has fewer than `k`
    /// frames, since some sector would then be empty.
    pub fn new(span: Span, k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config("sector count must be at least 1".into()));
        }
        let len = span.len();
        if (len as usize) < k {
            return Err(Error::DegenerateGrid { len, k });
        }
        let (len, k64) = (len as u64, k as u64);
        let boundaries = (0..=k64)
            .map(|i| span.begin + ((2 * i * len + k64) / (2 * k64)) as u32)
            .collect();
        Ok(SectorGrid { span, boundaries })
    }

    /// One sector over the whole span.
    pub fn single(span: Span) -> Result<Self> {
        Self::new(span, 1)
    }

    pub fn span(&self) -> Span {
        self.span
    }

    pub fn k(&self) -> usize {
        self.boundaries.len() - 1
    }

    /// Real-valued sector length `len / k`.
    pub fn coverage(&self) -> f64 {
        self.span.len() as f64 / self.k() as f64
    }

    pub fn boundaries(&self) -> &[u32] {
        &self.boundaries
    }

    pub fn sector(&self, i: usize) -> Span {
        Span::new(self.boundaries[i], self.boundaries[i + 1])
    }

    pub fn sectors(&self) -> impl Iterator<Item = Span> + '_ {
        self.boundaries.windows(2).map(|w| Span::new(w[0], w[1]))
    }
}

/// Grid over the frames two trajectories share.
pub fn build_grid(subject: &Trajectory, object: &Trajectory, k: usize) -> Result<SectorGrid> {
    let shared = temporal_overlap(subject, object);
    if shared.is_empty() {
        return Err(Error::NoOverlap {
            subject: subject.id(),
            object: object.id(),
        });
    }
    SectorGrid::new(shared, k)
}

/// Binary `m x k` sector targets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SectorLabels {
    m: usize,
    k: usize,
    cells: Vec<bool>,
}

impl SectorLabels {
    pub fn zeros(m: usize, k: usize) -> Self {
        SectorLabels {
            m,
            k,
            cells: vec![false; m * k],
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.k)
    }

    pub fn get(&self, predicate: usize, sector: usize) -> bool {
        self.cells[predicate * self.k + sector]
    }

    pub fn set(&mut self, predicate: usize, sector: usize, value: bool) {
        self.cells[predicate * self.k + sector] = value;
    }

    pub fn row(&self, predicate: usize) -> &[bool] {
        &self.cells[predicate * self.k..(predicate + 1) * self.k]
    }

    pub fn is_empty(&self) -> bool {
        !self.cells.iter().any(|&c| c)
    }

    /// Row-major 0/1 values.
    pub fn to_f64(&self) -> Vec<f64> {
        self.cells.iter().map(|&c| if c { 1.0 } else { 0.0 }).collect()
    }
}

/// Sector `i` of predicate `r` is 1 iff some relation with predicate `r`
/// covers strictly more than half of the sector's frames.
pub fn label_sectors(
    grid: &SectorGrid,
    relations: &[RelationInstance],
    m: usize,
) -> Result<SectorLabels> {
    let mut labels = SectorLabels::zeros(m, grid.k());
    for rel in relations {
        if rel.predicate >= m {
            return Err(Error::PredicateOutOfRange {
                index: rel.predicate,
                size: m,
            });
        }
        for (i, sector) in grid.sectors().enumerate() {
            if 2 * sector.overlap_len(&rel.span) > sector.len() {
                labels.set(rel.predicate, i, true);
            }
        }
    }
    Ok(labels)
}

/// Per-(predicate, sector) probabilities.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionMatrix {
    m: usize,
    k: usize,
    values: Vec<f64>,
}

impl PredictionMatrix {
    pub fn new(m: usize, k: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != m * k {
            return Err(Error::ShapeMismatch {
                op: "prediction matrix",
                lhs: (m, k),
                rhs: (values.len(), 1),
            });
        }
        Ok(PredictionMatrix { m, k, values })
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.m, self.k)
    }

    pub fn get(&self, predicate: usize, sector: usize) -> f64 {
        self.values[predicate * self.k + sector]
    }

    pub fn row(&self, predicate: usize) -> &[f64] {
        &self.values[predicate * self.k..(predicate + 1) * self.k]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Averages each row into a single sector.
    pub fn collapse(&self) -> PredictionMatrix {
        let values = (0..self.m)
            .map(|r| self.row(r).iter().sum::<f64>() / self.k as f64)
            .collect();
        PredictionMatrix {
            m: self.m,
            k: 1,
            values,
        }
    }
}

/// A decoded relation span with its mean sector probability.
#[derive(Clone, Debug, PartialEq)]
pub struct DecodedSpan {
    pub predicate: usize,
    pub span: Span,
    pub confidence: f64,
}

/// Threshold and run-merging rule for turning sector activations into spans.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpanDecoder {
    pub threshold: f64,
    /// Inactive sectors tolerated inside a run.
    pub gap: usize,
}

impl Default for SpanDecoder {
    fn default() -> Self {
        SpanDecoder {
            threshold: 0.5,
            gap: 0,
        }
    }
}

impl SpanDecoder {
    /// Maximal runs of sectors at or above the threshold, per predicate row,
    /// sorted by predicate then begin frame.
    pub fn decode(&self, grid: &SectorGrid, z: &PredictionMatrix) -> Result<Vec<DecodedSpan>> {
        if z.k != grid.k() {
            return Err(Error::ShapeMismatch {
                op: "decode_spans",
                lhs: z.shape(),
                rhs: (z.m, grid.k()),
            });
        }
        let mut out = Vec::new();
        for predicate in 0..z.m {
            let row = z.row(predicate);
            let active: Vec<usize> = (0..z.k).filter(|&i| row[i] >= self.threshold).collect();
            let mut i = 0;
            while i < active.len() {
                let first = active[i];
                let mut last = first;
                while i + 1 < active.len() && active[i + 1] - last <= self.gap + 1 {
                    i += 1;
                    last = active[i];
                }
                let members = &row[first..=last];
                out.push(DecodedSpan {
                    predicate,
                    span: Span::new(grid.boundaries[first], grid.boundaries[last + 1]),
                    confidence: members.iter().sum::<f64>() / members.len() as f64,
                });
                i += 1;
            }
        }
        Ok(out)
    }
}

pub fn decode_spans(
    grid: &SectorGrid,
    z: &PredictionMatrix,
    threshold: f64,
) -> Result<Vec<DecodedSpan>> {
    SpanDecoder { threshold, gap: 0 }.decode(grid, z)
}
