//! Coordinate charts with optional periodic factors.
//!
//! A chart is R^d with a subset of coordinates living on R/Z. Periodic
//! coordinates are reduced to [0,1) on input and output; differences across
//! the seam use the representative in (-1/2, 1/2].

use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Chart {
    dim: usize,
    periodic: Vec<bool>,
    labels: Vec<String>,
}

impl Chart {
    pub fn new(labels: &[&str], periodic: &[bool]) -> Arc<Self> {
        assert_eq!(labels.len(), periodic.len());
        assert!(!labels.is_empty());
        Arc::new(Chart {
            dim: labels.len(),
            periodic: periodic.to_vec(),
            labels: labels.iter().map(|s| s.to_string()).collect(),
        })
    }

    /// All-Euclidean chart with generated labels.
    pub fn euclidean(dim: usize) -> Arc<Self> {
        let labels: Vec<String> = (0..dim).map(|i| format!("q{i}")).collect();
        Arc::new(Chart {
            dim,
            periodic: vec![false; dim],
            labels,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn periodic_mask(&self) -> &[bool] {
        &self.periodic
    }

    pub fn is_periodic(&self, i: usize) -> bool {
        self.periodic[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    /// Reduce periodic coordinates to [0,1).
    pub fn reduce(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.dim);
        p.iter()
            .zip(&self.periodic)
            .map(|(&x, &per)| if per { x.rem_euclid(1.0) } else { x })
            .collect()
    }

    /// Component-wise difference a - b, with periodic components reduced to
    /// the representative in (-1/2, 1/2].
    pub fn diff(&self, a: &[f64], b: &[f64]) -> Vec<f64> {
        a.iter()
            .zip(b)
            .zip(&self.periodic)
            .map(|((&x, &y), &per)| {
                let d = x - y;
                if per {
                    let mut r = d.rem_euclid(1.0);
                    if r > 0.5 {
                        r -= 1.0;
                    }
                    r
                } else {
                    d
                }
            })
            .collect()
    }

    /// Periodic-aware Euclidean distance.
    pub fn distance(&self, a: &[f64], b: &[f64]) -> f64 {
        self.diff(a, b).iter().map(|d| d * d).sum::<f64>().sqrt()
    }

    pub fn same_shape(&self, other: &Chart) -> bool {
        self.dim == other.dim && self.periodic == other.periodic
    }
}
