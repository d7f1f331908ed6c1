//! Exact geometry of planar polyhedra, used to measure how fast the cutting
//! plane shrinks the feasible region in two dimensions.

use alloc::vec;
use alloc::vec::Vec;

use crate::polytope::Polyhedron;

/// Vertices (counter-clockwise) of `{x : a_i . x >= b_i}` intersected with
/// the square `[-bound, bound]^2`, computed by successive half-plane clipping.
pub fn clip_polygon(rows: &[([f64; 2], f64)], bound: f64) -> Vec<[f64; 2]> {
    let mut poly = vec![
        [-bound, -bound],
        [bound, -bound],
        [bound, bound],
        [-bound, bound],
    ];
    for &(a, b) in rows {
        if poly.is_empty() {
            break;
        }
        let val = |p: &[f64; 2]| a[0] * p[0] + a[1] * p[1] - b;
        let mut out = Vec::with_capacity(poly.len() + 1);
        for i in 0..poly.len() {
            let p = poly[i];
            let q = poly[(i + 1) % poly.len()];
            let (vp, vq) = (val(&p), val(&q));
            if vp >= 0.0 {
                out.push(p);
            }
            if (vp >= 0.0) != (vq >= 0.0) {
                let t = vp / (vp - vq);
                out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
            }
        }
        poly = out;
    }
    poly
}

/// Shoelace area of a simple polygon.
pub fn polygon_area(vertices: &[[f64; 2]]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let twice: f64 = (0..n)
        .map(|i| {
            let p = vertices[i];
            let q = vertices[(i + 1) % n];
            p[0] * q[1] - q[0] * p[1]
        })
        .sum();
    0.5 * twice.abs()
}

/// Area of a bounded planar polyhedron.
///
/// The computation runs in the polyhedron's local frame, so the result stays
/// accurate for regions that are tiny compared with their distance from the
/// origin. Returns `None` unless `p` is two-dimensional.
pub fn area(p: &Polyhedron) -> Option<f64> {
    if p.dim() != 2 {
        return None;
    }
    let rows: Vec<([f64; 2], f64)> = (0..p.num_rows())
        .map(|i| {
            let a = p.normal(i);
            ([a[0], a[1]], p.local_offset(i))
        })
        .collect();
    let bound = rows.iter().map(|r| r.1.abs()).fold(1.0, f64::max) * 4.0;
    Some(polygon_area(&clip_polygon(&rows, bound)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_square_and_triangle() {
        let sq = Polyhedron::hypercube(&[5.0, -3.0], 2.0).unwrap();
        assert!((area(&sq).unwrap() - 4.0).abs() < 1e-12);
        let rows = vec![
            (vec![1.0, 0.0], 0.0),
            (vec![0.0, 1.0], 0.0),
            (vec![-1.0, -1.0], -1.0),
        ];
        let tri = Polyhedron::new(2, &rows, &[0.2, 0.2]).unwrap();
        assert!((area(&tri).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cut_halves_square() {
        let mut sq = Polyhedron::hypercube(&[0.0, 0.0], 2.0).unwrap();
        sq.push_row(&[1.0, 1.0], 0.0).unwrap();
        assert!((area(&sq).unwrap() - 2.0).abs() < 1e-12);
    }
}
