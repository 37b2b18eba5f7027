/// Side length of the bundled Koch prefractal's base triangle. Chosen so
/// the inradius (~0.43) leaves room for interior cubes at desk resolutions.
pub const KOCH_SIDE: f64 = 1.5;

/// Koch snowflake prefractal at the given construction depth: an
/// equilateral triangle (depth 0) with every edge repeatedly replaced by
/// the four-segment bump pointing outward. Returns a flat, counterclockwise
/// vertex list `[x0, y0, x1, y1, ...]` centered at the origin.
pub fn koch_polygon(depth: u32, side: f64) -> Vec<f64> {
    let rc = side / 3f64.sqrt(); // circumradius
    let mut poly = Vec::with_capacity(6);
    for k in 0..3 {
        // 90, 210, 330 degrees: counterclockwise.
        let ang = std::f64::consts::FRAC_PI_2 + k as f64 * 2.0 * std::f64::consts::FRAC_PI_3;
        poly.push(rc * ang.cos());
        poly.push(rc * ang.sin());
    }
    for _ in 0..depth {
        poly = koch_step(&poly);
    }
    poly
}

/// One substitution step: each edge A->B becomes A, P1, P, P2 where P1, P2
/// trisect the edge and P is the apex of the outward equilateral bump.
/// Outward for a counterclockwise polygon means to the right of A->B,
/// i.e. the trisected middle segment rotated by -60 degrees.
fn koch_step(poly: &[f64]) -> Vec<f64> {
    let n = poly.len() / 2;
    let mut out = Vec::with_capacity(poly.len() * 4);
    let (cos60, sin60) = (0.5, 3f64.sqrt() / 2.0);
    for i in 0..n {
        let (ax, ay) = (poly[2 * i], poly[2 * i + 1]);
        let j = (i + 1) % n;
        let (bx, by) = (poly[2 * j], poly[2 * j + 1]);
        let (dx, dy) = ((bx - ax) / 3.0, (by - ay) / 3.0);
        let (p1x, p1y) = (ax + dx, ay + dy);
        let (p2x, p2y) = (ax + 2.0 * dx, ay + 2.0 * dy);
        // Rotate (p2 - p1) by -60 degrees around p1.
        let (px, py) = (p1x + dx * cos60 + dy * sin60, p1y - dx * sin60 + dy * cos60);
        out.extend_from_slice(&[ax, ay, p1x, p1y, px, py, p2x, p2y]);
    }
    out
}

/// Shoelace signed area; positive for counterclockwise polygons.
pub fn signed_area(poly: &[f64]) -> f64 {
    let n = poly.len() / 2;
    let mut acc = 0.0;
    for i in 0..n {
        let j = (i + 1) % n;
        acc += poly[2 * i] * poly[2 * j + 1] - poly[2 * j] * poly[2 * i + 1];
    }
    0.5 * acc
}

/// Even-odd ray casting. Points exactly on an edge may land on either side;
/// rasterization does not place cell centers on edges in any bundled setup.
pub fn point_in_polygon(p: &[f64], poly: &[f64]) -> bool {
    let n = poly.len() / 2;
    let (px, py) = (p[0], p[1]);
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (xi, yi) = (poly[2 * i], poly[2 * i + 1]);
        let (xj, yj) = (poly[2 * j], poly[2 * j + 1]);
        if (yi > py) != (yj > py) && px < xi + (xj - xi) * (py - yi) / (yj - yi) {
            inside = !inside;
        }
        j = i;
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn depth_zero_is_ccw_triangle_with_requested_side() {
        let poly = koch_polygon(0, KOCH_SIDE);
        assert_eq!(poly.len(), 6);
        let (ax, ay, bx, by) = (poly[0], poly[1], poly[2], poly[3]);
        let side = ((bx - ax).powi(2) + (by - ay).powi(2)).sqrt();
        assert!((side - KOCH_SIDE).abs() < 1e-12);
        assert!(signed_area(&poly) > 0.0);
    }

    #[test]
    fn edge_count_quadruples_per_depth() {
        for depth in 0..4 {
            let poly = koch_polygon(depth, 1.0);
            assert_eq!(poly.len() / 2, 3 * 4usize.pow(depth));
        }
    }

    #[test]
    fn area_follows_the_snowflake_series() {
        // Each step adds one outward triangle per edge:
        // A_d = A_0 * (1 + (3/5) * (1 - (4/9)^d)).
        let a0 = 3f64.sqrt() / 4.0 * KOCH_SIDE * KOCH_SIDE;
        for depth in 0..5u32 {
            let poly = koch_polygon(depth, KOCH_SIDE);
            let expect = a0 * (1.0 + 0.6 * (1.0 - (4f64 / 9.0).powi(depth as i32)));
            assert!(
                (signed_area(&poly) - expect).abs() < 1e-12,
                "depth {depth}: {} vs {expect}",
                signed_area(&poly)
            );
        }
    }

    #[test]
    fn bumps_point_outward() {
        // Outward bumps grow the area; inward ones would shrink it.
        let a0 = signed_area(&koch_polygon(0, 1.0));
        let a1 = signed_area(&koch_polygon(1, 1.0));
        assert!(a1 > a0);
    }

    #[test]
    fn point_in_polygon_basics() {
        let poly = koch_polygon(2, KOCH_SIDE);
        // Centroid of the base triangle is the origin.
        assert!(point_in_polygon(&[0.0, 0.0], &poly));
        assert!(!point_in_polygon(&[10.0, 0.0], &poly));
        assert!(!point_in_polygon(&[0.0, -10.0], &poly));
        // Inradius of the base triangle: side / (2 sqrt 3) = 0.433...
        let inr = KOCH_SIDE / (2.0 * 3f64.sqrt());
        assert!(point_in_polygon(&[0.0, -inr * 0.95], &poly));
    }

    #[test]
    fn vertices_stay_within_a_modest_disc() {
        // The prefractal stays inside ~1.16x the circumradius of the base
        // triangle; guards the raster bounding box logic.
        let rc = KOCH_SIDE / 3f64.sqrt();
        for depth in 0..5 {
            let poly = koch_polygon(depth, KOCH_SIDE);
            for q in poly.chunks(2) {
                let r = (q[0] * q[0] + q[1] * q[1]).sqrt();
                assert!(r <= rc * 1.2, "vertex at radius {r}");
            }
        }
    }
}
