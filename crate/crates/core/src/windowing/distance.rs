//! Boundary impact factors: distance from each active element centre to the
//! nearest convection face and the nearest Dirichlet face.
//!
//! Face centres and element centres all lie on the grid of half-element
//! steps, so both distance fields come from an exact squared Euclidean
//! distance transform on that doubled grid.

use crate::geometry::{BuildDomain, FaceKind};
use crate::grid::{Dims, FACE_DIRS};

#[derive(Debug, Clone, PartialEq)]
pub struct BoundaryImpact {
    /// mm; 0 for inactive elements, infinite when no such face exists.
    pub d_conv: Vec<f64>,
    pub d_dirichlet: Vec<f64>,
}

pub fn boundary_impact(domain: &BuildDomain, active: &[bool]) -> BoundaryImpact {
    let d = domain.dims();
    let fine = Dims::new(2 * d.nx + 1, 2 * d.ny + 1, 2 * d.nz + 1);
    let mut conv = vec![f64::INFINITY; fine.len()];
    let mut dirichlet = vec![f64::INFINITY; fine.len()];
    for idx in (0..d.len()).filter(|&i| active[i]) {
        let c = d.coord(idx);
        for (dir, off) in FACE_DIRS.iter().enumerate() {
            let field = match domain.face_kind(idx, dir, active) {
                FaceKind::Interior => continue,
                FaceKind::Convection => &mut conv,
                FaceKind::Dirichlet => &mut dirichlet,
            };
            let p = [
                (2 * c.i + 1) as isize + off[0],
                (2 * c.j + 1) as isize + off[1],
                (2 * c.k + 1) as isize + off[2],
            ];
            field[p[0] as usize + fine.nx * (p[1] as usize + fine.ny * p[2] as usize)] = 0.0;
        }
    }
    squared_edt(&mut conv, fine);
    squared_edt(&mut dirichlet, fine);

    let half = 0.5 * domain.element_size_mm();
    let sample = |field: &[f64]| -> Vec<f64> {
        (0..d.len())
            .map(|idx| {
                if !active[idx] {
                    return 0.0;
                }
                let c = d.coord(idx);
                let p = (2 * c.i + 1) + fine.nx * ((2 * c.j + 1) + fine.ny * (2 * c.k + 1));
                half_steps_to_mm(field[p], half)
            })
            .collect()
    };
    BoundaryImpact {
        d_conv: sample(&conv),
        d_dirichlet: sample(&dirichlet),
    }
}

/// Convert a squared distance in half-element steps to mm.
#[inline]
pub(crate) fn half_steps_to_mm(d2: f64, half_mm: f64) -> f64 {
    d2.sqrt() * half_mm
}

/// In-place squared Euclidean distance transform; zeros mark seeds and
/// infinity marks everything else. Separable, one pass per axis.
fn squared_edt(field: &mut [f64], d: Dims) {
    let n = d.as_array();
    let longest = n.iter().copied().max().unwrap_or(0);
    let mut line = vec![0.0; longest];
    let mut out = vec![0.0; longest];
    let mut v = vec![0usize; longest];
    let mut z = vec![0.0; longest + 1];
    let strides = [1, d.nx, d.nx * d.ny];
    for axis in 0..3 {
        let len = n[axis];
        let stride = strides[axis];
        let (a, b) = match axis {
            0 => (1, 2),
            1 => (0, 2),
            _ => (0, 1),
        };
        for u in 0..n[a] {
            for w in 0..n[b] {
                let base = u * strides[a] + w * strides[b];
                for t in 0..len {
                    line[t] = field[base + t * stride];
                }
                lower_envelope(&line[..len], &mut out[..len], &mut v, &mut z);
                for t in 0..len {
                    field[base + t * stride] = out[t];
                }
            }
        }
    }
}

/// 1D distance transform of sampled function `f` under squared distance
/// (lower envelope of parabolas). Infinite samples contribute no parabola.
fn lower_envelope(f: &[f64], out: &mut [f64], v: &mut [usize], z: &mut [f64]) {
    let mut k: isize = -1;
    for q in 0..f.len() {
        if !f[q].is_finite() {
            continue;
        }
        loop {
            if k < 0 {
                k = 0;
                v[0] = q;
                z[0] = f64::NEG_INFINITY;
                z[1] = f64::INFINITY;
                break;
            }
            let p = v[k as usize];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64));
            if s <= z[k as usize] {
                k -= 1;
                continue;
            }
            k += 1;
            v[k as usize] = q;
            z[k as usize] = s;
            z[k as usize + 1] = f64::INFINITY;
            break;
        }
    }
    if k < 0 {
        out.fill(f64::INFINITY);
        return;
    }
    let mut j = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        while z[j + 1] < q as f64 {
            j += 1;
        }
        let p = v[j];
        let dq = q as f64 - p as f64;
        *o = dq * dq + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{attach_substrate, generate_shape, ShapeFamily, VoxelPart};
    use crate::grid::Coord;

    /// Exhaustive element-to-face distances in half steps, squared.
    fn brute_force(domain: &BuildDomain, active: &[bool]) -> (Vec<f64>, Vec<f64>) {
        let d = domain.dims();
        let mut conv_faces = Vec::new();
        let mut dir_faces = Vec::new();
        for idx in (0..d.len()).filter(|&i| active[i]) {
            let c = d.coord(idx);
            for (dir, off) in FACE_DIRS.iter().enumerate() {
                let p = [
                    (2 * c.i + 1) as i64 + off[0] as i64,
                    (2 * c.j + 1) as i64 + off[1] as i64,
                    (2 * c.k + 1) as i64 + off[2] as i64,
                ];
                match domain.face_kind(idx, dir, active) {
                    FaceKind::Convection => conv_faces.push(p),
                    FaceKind::Dirichlet => dir_faces.push(p),
                    FaceKind::Interior => {}
                }
            }
        }
        let half = 0.5 * domain.element_size_mm();
        let nearest = |faces: &[[i64; 3]], idx: usize| {
            if !active[idx] {
                return 0.0;
            }
            let c = d.coord(idx);
            let e = [(2 * c.i + 1) as i64, (2 * c.j + 1) as i64, (2 * c.k + 1) as i64];
            let best = faces
                .iter()
                .map(|f| (0..3).map(|a| (f[a] - e[a]).pow(2)).sum::<i64>())
                .min()
                .unwrap();
            half_steps_to_mm(best as f64, half)
        };
        (
            (0..d.len()).map(|i| nearest(&conv_faces, i)).collect(),
            (0..d.len()).map(|i| nearest(&dir_faces, i)).collect(),
        )
    }

    #[test]
    fn matches_brute_force_on_small_domains() {
        for (seed, fam) in [(1, ShapeFamily::Carved), (2, ShapeFamily::Holed), (3, ShapeFamily::Stacked)] {
            let part = generate_shape(seed, fam, Dims::new(6, 6, 4)).unwrap();
            let dom = attach_substrate(&part, 2).unwrap();
            // partially built: only the first 40 part voxels in index order
            let mut active = dom.initial_active();
            let mut added = 0;
            for i in 0..dom.dims().len() {
                if dom.is_part(i) && added < 40 {
                    active[i] = true;
                    added += 1;
                }
            }
            let bi = boundary_impact(&dom, &active);
            let (conv, dirichlet) = brute_force(&dom, &active);
            assert_eq!(bi.d_conv, conv);
            assert_eq!(bi.d_dirichlet, dirichlet);
        }
    }

    #[test]
    fn face_on_boundary_is_half_an_element_away() {
        let part = VoxelPart::new(Dims::new(3, 3, 3), vec![true; 27], 2.0).unwrap();
        let dom = attach_substrate(&part, 1).unwrap();
        let all = vec![true; dom.dims().len()];
        let bi = boundary_impact(&dom, &all);
        let d = dom.dims();
        let corner = d.index(Coord::new(0, 0, 3));
        assert_eq!(bi.d_conv[corner], 1.0);
        let bottom = d.index(Coord::new(1, 1, 0));
        assert_eq!(bi.d_dirichlet[bottom], 1.0);
        // the bottom faces are Dirichlet, so the nearest convection face of the
        // centre-bottom element is a side face one and a half elements away
        assert_eq!(bi.d_conv[bottom], 3.0);
        let top_centre = d.index(Coord::new(1, 1, 3));
        assert_eq!(bi.d_dirichlet[top_centre], 7.0);
    }
}
