use super::ImgeoError;
use crate::grid::Mask;

/// Positive pixel closest to `q`; ties go to the smallest row-major index.
pub fn nearest_positive(mask: &Mask, q: (f64, f64)) -> Result<(i64, i64), ImgeoError> {
    let mut best: Option<((i64, i64), f64)> = None;
    for (x, y, &v) in mask.iter_xy() {
        if !v {
            continue;
        }
        let d2 = (x as f64 - q.0).powi(2) + (y as f64 - q.1).powi(2);
        if best.is_none_or(|(_, b)| d2 < b) {
            best = Some(((x as i64, y as i64), d2));
        }
    }
    best.map(|(p, _)| p).ok_or(ImgeoError::EmptyMask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn positive_query_returns_itself() {
        let m = Mask::disk(20, 20, 10.0, 10.0, 4.0);
        assert_eq!(nearest_positive(&m, (9.0, 11.0)).unwrap(), (9, 11));
    }

    #[test]
    fn annulus_nearest_is_on_inner_radius() {
        let m = Mask::annulus(41, 41, 20.0, 20.0, 8.0, 10.0);
        let p = nearest_positive(&m, (20.0, 20.0)).unwrap();
        let d = (((p.0 - 20).pow(2) + (p.1 - 20).pow(2)) as f64).sqrt();
        assert_eq!(d, 8.0);
        // (20, 12) is the first of the four distance-8 pixels in raster order.
        assert_eq!(p, (20, 12));
    }

    #[test]
    fn ties_resolve_row_major() {
        let mut m = Mask::filled(5, 5, false);
        m.set(4, 2, true);
        m.set(2, 4, true);
        m.set(0, 2, true);
        assert_eq!(nearest_positive(&m, (2.0, 2.0)).unwrap(), (0, 2));
        assert_eq!(nearest_positive(&Mask::filled(3, 3, false), (1.0, 1.0)), Err(ImgeoError::EmptyMask));
    }

    proptest! {
        #[test]
        fn result_is_minimal(bits in prop::collection::vec(any::<bool>(), 64), qx in -2.0f64..10.0, qy in -2.0f64..10.0) {
            let m = Mask::from_vec(8, 8, bits);
            match nearest_positive(&m, (qx, qy)) {
                Err(_) => prop_assert!(m.is_empty_mask()),
                Ok(p) => {
                    prop_assert!(m.is_set(p.0, p.1));
                    let d = |a: (i64, i64)| (a.0 as f64 - qx).powi(2) + (a.1 as f64 - qy).powi(2);
                    for o in m.positives() {
                        prop_assert!(d(p) <= d(o));
                    }
                }
            }
        }
    }
}
