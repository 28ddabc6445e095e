//! Spatial gradient matrix and minimum-eigenvalue corner score.

use nalgebra::Matrix2;

use super::{FrontendError, GrayImage};

/// Sum of gradient outer products `[Ix^2, IxIy; IxIy, Iy^2]` over the window
/// `[cx - wx, cx + wx] x [cy - wy, cy + wy]`, with central-difference
/// derivatives. The window plus a one-pixel derivative margin must lie
/// inside the image.
pub fn spatial_gradient_matrix(
    img: &GrayImage,
    cx: usize,
    cy: usize,
    wx: usize,
    wy: usize,
) -> Result<Matrix2<f64>, FrontendError> {
    let (x0, x1) = (cx as i64 - wx as i64 - 1, (cx + wx + 1) as i64);
    let (y0, y1) = (cy as i64 - wy as i64 - 1, (cy + wy + 1) as i64);
    if x0 < 0 || y0 < 0 || x1 >= img.width() as i64 || y1 >= img.height() as i64 {
        return Err(FrontendError::WindowOutOfBounds {
            x0,
            x1,
            y0,
            y1,
            width: img.width(),
            height: img.height(),
        });
    }
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for y in cy - wy..=cy + wy {
        for x in cx - wx..=cx + wx {
            let ix = 0.5 * (img.get(x + 1, y) - img.get(x - 1, y));
            let iy = 0.5 * (img.get(x, y + 1) - img.get(x, y - 1));
            sxx += ix * ix;
            sxy += ix * iy;
            syy += iy * iy;
        }
    }
    Ok(Matrix2::new(sxx, sxy, sxy, syy))
}

/// Smaller eigenvalue of a symmetric 2x2 matrix.
pub fn min_eig_score(g: &Matrix2<f64>) -> f64 {
    let (a, b, c) = (g[(0, 0)], 0.5 * (g[(0, 1)] + g[(1, 0)]), g[(1, 1)]);
    let mean = 0.5 * (a + c);
    let radius = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let max = mean + radius;
    if max > 0.0 {
        // det / max avoids cancellation when the eigenvalues differ widely.
        (a * c - b * b) / max
    } else {
        mean - radius
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::SymmetricEigen;
    use proptest::prelude::*;

    #[test]
    fn constant_image_has_zero_matrix() {
        let img = GrayImage::from_fn(20, 20, |_, _| 0.4);
        assert_eq!(
            spatial_gradient_matrix(&img, 10, 10, 4, 4).unwrap(),
            Matrix2::zeros()
        );
    }

    #[test]
    fn vertical_edge_is_rank_one() {
        let img = GrayImage::from_fn(20, 20, |x, _| if x < 10 { 0.0 } else { 1.0 });
        let g = spatial_gradient_matrix(&img, 10, 10, 4, 4).unwrap();
        assert!(g[(0, 0)] > 0.0);
        assert_eq!(g[(1, 1)], 0.0);
        assert_eq!(g[(0, 1)], 0.0);
        assert!(min_eig_score(&g).abs() < 1e-15);
    }

    #[test]
    fn window_at_border_is_rejected() {
        let img = GrayImage::from_fn(20, 20, |_, _| 0.0);
        assert!(spatial_gradient_matrix(&img, 4, 10, 4, 4).is_err());
        assert!(spatial_gradient_matrix(&img, 5, 10, 4, 4).is_ok());
        assert!(spatial_gradient_matrix(&img, 10, 15, 4, 4).is_err());
    }

    #[test]
    fn checkerboard_matches_direct_summation() {
        let img = GrayImage::from_fn(
            24,
            24,
            |x, y| if (x / 3 + y / 3) % 2 == 0 { 0.9 } else { 0.1 },
        );
        let g = spatial_gradient_matrix(&img, 11, 12, 4, 3).unwrap();
        // Independent oracle: build the derivative images first, then sum
        // the outer products.
        let dx = |x: usize, y: usize| (img.get(x + 1, y) - img.get(x - 1, y)) / 2.0;
        let dy = |x: usize, y: usize| (img.get(x, y + 1) - img.get(x, y - 1)) / 2.0;
        let mut expected = Matrix2::zeros();
        for y in 9..=15 {
            for x in 7..=15 {
                let grad = nalgebra::Vector2::new(dx(x, y), dy(x, y));
                expected += grad * grad.transpose();
            }
        }
        assert_eq!(g, expected);
    }

    #[test]
    fn min_eig_diagonal_and_zero() {
        assert_eq!(min_eig_score(&Matrix2::new(4.0, 0.0, 0.0, 9.0)), 4.0);
        assert_eq!(min_eig_score(&Matrix2::zeros()), 0.0);
    }

    proptest! {
        #[test]
        fn min_eig_matches_eigensolver(a in -5.0..5.0f64, b in -5.0..5.0f64, c in -5.0..5.0f64, d in -5.0..5.0f64) {
            let m = Matrix2::new(a, b, c, d);
            let g = m * m.transpose();
            let expected = SymmetricEigen::new(g).eigenvalues.min();
            let got = min_eig_score(&g);
            prop_assert!((got - expected).abs() < 1e-10 * (1.0 + g.norm()));
            prop_assert!(got >= -1e-12);
            prop_assert!(got <= g.trace() / 2.0 + 1e-12);
        }
    }
}
