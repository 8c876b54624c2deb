//! Dominance, Pareto fronts, convex coverage sets and hypervolume.
//!
//! Both objectives are maximized. Filters return indices into the input.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Equality tolerance for dominance and hull membership.
pub const TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReturnPoint {
    pub label: String,
    pub values: Vec<f64>,
}

impl ReturnPoint {
    pub fn new(label: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return point"));
        }
        Ok(Self {
            label: label.into(),
            values,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dominance {
    Strict,
    Weak,
    None,
}

fn same_dim(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() == b.len() {
        Ok(())
    } else {
        Err(Error::Shape {
            expected: a.len(),
            got: b.len(),
        })
    }
}

/// How `a` relates to `b`: strict if `a >= b` everywhere and `a > b`
/// somewhere, weak if only `a >= b` everywhere.
pub fn dominates(a: &[f64], b: &[f64]) -> Result<Dominance> {
    same_dim(a, b)?;
    if a.iter().zip(b).any(|(x, y)| *x < *y - TOLERANCE) {
        return Ok(Dominance::None);
    }
    if a.iter().zip(b).any(|(x, y)| *x > *y + TOLERANCE) {
        Ok(Dominance::Strict)
    } else {
        Ok(Dominance::Weak)
    }
}

fn check_points<P: AsRef<[f64]>>(points: &[P]) -> Result<usize> {
    let dim = points.first().map_or(0, |p| p.as_ref().len());
    for p in points {
        same_dim(&vec![0.0; dim], p.as_ref())?;
        if p.as_ref().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("return point"));
        }
    }
    Ok(dim)
}

/// Indices of points not dominated by any other point. Duplicates keep their
/// first occurrence.
pub fn pareto_front<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<usize>> {
    check_points(points)?;
    let mut keep = Vec::new();
    'outer: for (i, p) in points.iter().enumerate() {
        for (j, q) in points.iter().enumerate() {
            if i == j {
                continue;
            }
            match dominates(q.as_ref(), p.as_ref())? {
                Dominance::Strict => continue 'outer,
                Dominance::Weak if j < i => continue 'outer,
                _ => {}
            }
        }
        keep.push(i);
    }
    Ok(keep)
}

fn require_2d(dim: usize) -> Result<()> {
    if dim == 2 {
        Ok(())
    } else {
        Err(Error::domain(format!("only two objectives are supported, got {dim}")))
    }
}

/// Indices of the points that maximize `ω·p` for some ω on the simplex,
/// found on the upper-right convex hull of the Pareto front. Points lying on
/// a hull edge within [`TOLERANCE`] are kept.
pub fn ccs<P: AsRef<[f64]>>(points: &[P]) -> Result<Vec<usize>> {
    if points.is_empty() {
        return Ok(Vec::new());
    }
    require_2d(check_points(points)?)?;
    let mut front = pareto_front(points)?;
    let xy = |i: usize| {
        let p = points[i].as_ref();
        (p[0], p[1])
    };
    front.sort_by(|&a, &b| xy(a).0.total_cmp(&xy(b).0).then(xy(b).1.total_cmp(&xy(a).1)));
    let mut hull: Vec<usize> = Vec::with_capacity(front.len());
    for &i in &front {
        while hull.len() >= 2 {
            let a = xy(hull[hull.len() - 2]);
            let b = xy(hull[hull.len() - 1]);
            let p = xy(i);
            // preference normal to the edge a -> p
            let (n0, n1) = (a.1 - p.1, p.0 - a.0);
            let s = n0 + n1;
            if s <= 0.0 {
                break;
            }
            let (w0, w1) = (n0 / s, n1 / s);
            if w0 * b.0 + w1 * b.1 < w0 * a.0 + w1 * a.1 - TOLERANCE {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(i);
    }
    hull.sort_unstable();
    Ok(hull)
}

/// Area dominated by `points` and bounded below by `reference`.
pub fn hypervolume<P: AsRef<[f64]>>(points: &[P], reference: &[f64]) -> Result<f64> {
    require_2d(reference.len())?;
    if points.is_empty() {
        return Ok(0.0);
    }
    require_2d(check_points(points)?)?;
    let mut pts: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for p in points {
        let p = p.as_ref();
        if p[0] < reference[0] || p[1] < reference[1] {
            return Err(Error::domain(format!(
                "point ({}, {}) lies below the reference point",
                p[0], p[1]
            )));
        }
        pts.push((p[0], p[1]));
    }
    pts.sort_by(|a, b| b.0.total_cmp(&a.0).then(b.1.total_cmp(&a.1)));
    // staircase of non-dominated points, x falling and y rising
    let mut stairs: Vec<(f64, f64)> = Vec::with_capacity(pts.len());
    for p in pts {
        if stairs.last().is_none_or(|s| p.1 > s.1) {
            stairs.push(p);
        }
    }
    let mut area = 0.0;
    for (k, &(x, y)) in stairs.iter().enumerate() {
        let next_x = stairs.get(k + 1).map_or(reference[0], |p| p.0);
        area += (x - next_x) * (y - reference[1]);
    }
    Ok(area)
}
