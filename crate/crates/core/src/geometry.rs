//! Axis-aligned facets and the exact Hausdorff measure of their
//! intersections.
//!
//! A facet with centre `z ∈ [0,b]^d` and orientation `l ∈ {1..d}` is the box
//! `{x : x_l = z_l, |x_m − z_m| ≤ b for m ≠ l}`: a (d−1)-dimensional cube of
//! side `2b` normal to the `l`-th axis. All geometry here is closed-form
//! floating point: overlaps are sums and differences of coordinates, and the
//! only comparisons are against zero through `max(0, ·)`.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// One facet: a centre plus an axis orientation in `1..=d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Facet {
    center: Vec<f64>,
    orientation: usize,
}

impl Facet {
    /// Build a facet with `orientation ∈ {1..d}` where `d = center.len()`.
    ///
    /// Window membership is not required here; sampling code produces
    /// centres in `[0,b]^d`, while tests may place centres anywhere.
    pub fn new(center: Vec<f64>, orientation: usize) -> Result<Self> {
        let d = center.len();
        if d == 0 {
            return Err(Error::InvalidArgument("facet centre must be non-empty".into()));
        }
        if !(1..=d).contains(&orientation) {
            return Err(Error::InvalidArgument(format!(
                "orientation {orientation} outside 1..={d}"
            )));
        }
        if center.iter().any(|z| !z.is_finite()) {
            return Err(Error::InvalidArgument("facet centre must be finite".into()));
        }
        Ok(Facet { center, orientation })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    /// Orientation index in `1..=d` (the axis the facet is normal to).
    pub fn orientation(&self) -> usize {
        self.orientation
    }

    /// Zero-based axis index of the normal direction.
    pub fn axis(&self) -> usize {
        self.orientation - 1
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn in_window(&self, b: f64) -> bool {
        self.center.iter().all(|&z| (0.0..=b).contains(&z))
    }
}

/// A finite collection of facets. Storage order is bookkeeping only; the
/// semantics are those of a finite point configuration on the facet space.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FacetPattern {
    facets: Vec<Facet>,
}

impl FacetPattern {
    pub fn new(facets: Vec<Facet>) -> Self {
        FacetPattern { facets }
    }

    pub fn empty() -> Self {
        FacetPattern { facets: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.facets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facets.is_empty()
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn push(&mut self, facet: Facet) {
        self.facets.push(facet);
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Facet> {
        self.facets.iter()
    }

    pub fn all_in_window(&self, b: f64) -> bool {
        self.facets.iter().all(|f| f.in_window(b))
    }
}

impl From<Vec<Facet>> for FacetPattern {
    fn from(facets: Vec<Facet>) -> Self {
        FacetPattern { facets }
    }
}

/// Hausdorff measure `H^{d−j}` of the intersection of `j` facets, without
/// argument validation. Returns 0 whenever two facets share an orientation
/// or a fixed-coordinate constraint fails.
pub(crate) fn measure_refs(facets: &[&Facet], b: f64) -> f64 {
    let d = facets[0].dim();
    let mut occupied = [false; 16];
    debug_assert!(d <= 16);
    for f in facets {
        let axis = f.axis();
        if occupied[axis] {
            // Parallel facets are disjoint almost surely; coincident levels
            // are a measure-zero case folded into the same branch.
            return 0.0;
        }
        occupied[axis] = true;
    }
    // Fixed coordinates: facet i pins x_{l_i} to its centre level, which must
    // lie within distance b of every other facet's centre in that coordinate.
    for f in facets {
        let axis = f.axis();
        let level = f.center[axis];
        for g in facets {
            if (level - g.center[axis]).abs() > b {
                return 0.0;
            }
        }
    }
    // Free coordinates: intervals [z_m − b, z_m + b] intersect in a segment
    // of length 2b − (max − min), clamped at zero.
    let mut product = 1.0;
    for m in 0..d {
        if occupied[m] {
            continue;
        }
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for f in facets {
            lo = lo.min(f.center[m]);
            hi = hi.max(f.center[m]);
        }
        product *= (2.0 * b - (hi - lo)).max(0.0);
    }
    product
}

/// `H^{d−j}(∩ y_i)` for `j = facets.len()` facets in the window `[0,b]^d`.
///
/// Returns 0 if any two facets share an orientation. Otherwise the measure
/// is the product over free coordinates of the interval overlaps
/// `max(0, 2b − (max_i z_i[m] − min_i z_i[m]))`, guarded by the
/// fixed-coordinate constraints `|z_i[l_i] − z_{i'}[l_i]| ≤ b`. The empty
/// product for `j = d` is 1 (a single crossing point).
pub fn intersection_measure(facets: &[Facet], b: f64) -> Result<f64> {
    if facets.is_empty() {
        return Err(Error::InvalidArgument(
            "intersection_measure needs at least one facet".into(),
        ));
    }
    if !(b > 0.0) {
        return Err(Error::InvalidArgument("window size b must be positive".into()));
    }
    let d = facets[0].dim();
    if facets.iter().any(|f| f.dim() != d) {
        return Err(Error::InvalidArgument("facets must share one dimension".into()));
    }
    if facets.len() > d {
        return Err(Error::InvalidArgument(format!(
            "cannot intersect {} facets in dimension {d}",
            facets.len()
        )));
    }
    let refs: Vec<&Facet> = facets.iter().collect();
    Ok(measure_refs(&refs, b))
}

/// Whether `b^{d−c} ≤ H^{d−c}(∩ y_i) ≤ (2b)^{d−c}` holds for `c` facets with
/// pairwise-distinct orientations and centres in the window.
pub fn check_intersection_bounds(facets: &[Facet], b: f64) -> Result<bool> {
    let measure = intersection_measure(facets, b)?;
    let d = facets[0].dim() as i32;
    let c = facets.len() as i32;
    let lower = b.powi(d - c);
    let upper = (2.0 * b).powi(d - c);
    Ok(lower <= measure && measure <= upper)
}
