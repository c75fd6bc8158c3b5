//! Prediction sets produced by the conformal engine and the baselines.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SetKind {
    /// Accepted points of an equally spaced candidate grid, ascending.
    Grid {
        points: Vec<f64>,
        spacing: f64,
        grid_size: usize,
    },
    /// Accepted labels, ascending and without duplicates.
    Labels { labels: Vec<usize> },
    /// A closed interval, as produced by the WIS, SBA and oracle methods.
    Interval { lo: f64, hi: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionSet {
    pub kind: SetKind,
    /// The conformal quantile was infinite and every candidate was accepted.
    pub unbounded: bool,
}

impl PredictionSet {
    pub fn grid(points: Vec<f64>, spacing: f64, grid_size: usize, unbounded: bool) -> Self {
        debug_assert!(points.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(!unbounded || points.len() == grid_size);
        Self {
            kind: SetKind::Grid {
                points,
                spacing,
                grid_size,
            },
            unbounded,
        }
    }

    pub fn labels(mut labels: Vec<usize>, unbounded: bool) -> Self {
        labels.sort_unstable();
        labels.dedup();
        Self {
            kind: SetKind::Labels { labels },
            unbounded,
        }
    }

    pub fn interval(lo: f64, hi: f64) -> Self {
        Self {
            kind: SetKind::Interval { lo, hi },
            unbounded: false,
        }
    }

    /// Membership. A grid point covers `y` when `|y - point| <= spacing / 2`;
    /// an unbounded grid set covers everything.
    pub fn contains(&self, y: f64) -> bool {
        match &self.kind {
            SetKind::Grid { points, spacing, .. } => {
                if self.unbounded {
                    return true;
                }
                let half = spacing / 2.0;
                let i = points.partition_point(|&p| p < y - half);
                i < points.len() && (points[i] - y).abs() <= half
            }
            SetKind::Labels { labels } => {
                y >= 0.0 && y.fract() == 0.0 && labels.binary_search(&(y as usize)).is_ok()
            }
            SetKind::Interval { lo, hi } => *lo <= y && y <= *hi,
        }
    }

    /// Grid measure (accepted count times spacing), label count, or
    /// interval width.
    pub fn size(&self) -> f64 {
        match &self.kind {
            SetKind::Grid { points, spacing, .. } => points.len() as f64 * spacing,
            SetKind::Labels { labels } => labels.len() as f64,
            SetKind::Interval { lo, hi } => (hi - lo).max(0.0),
        }
    }

    /// Length of the convex hull of the covered region.
    pub fn hull_length(&self) -> f64 {
        match &self.kind {
            SetKind::Grid { points, spacing, .. } => match (points.first(), points.last()) {
                (Some(a), Some(b)) => b - a + spacing,
                _ => 0.0,
            },
            SetKind::Labels { labels } => labels.len() as f64,
            SetKind::Interval { lo, hi } => (hi - lo).max(0.0),
        }
    }

    pub fn is_empty(&self) -> bool {
        match &self.kind {
            SetKind::Grid { points, .. } => points.is_empty(),
            SetKind::Labels { labels } => labels.is_empty(),
            SetKind::Interval { lo, hi } => lo > hi,
        }
    }

    /// `(min, max)` of the accepted region, if any.
    pub fn bounds(&self) -> Option<(f64, f64)> {
        match &self.kind {
            SetKind::Grid { points, .. } => Some((*points.first()?, *points.last()?)),
            SetKind::Labels { labels } => {
                Some((*labels.first()? as f64, *labels.last()? as f64))
            }
            SetKind::Interval { lo, hi } => Some((*lo, *hi)),
        }
    }
}
