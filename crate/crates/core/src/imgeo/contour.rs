//! 8-connected component labelling and Moore boundary following.

use std::collections::VecDeque;

use super::ImgeoError;
use crate::grid::{Grid, Mask};

/// Moore neighbourhood in clockwise screen order (rows grow downwards),
/// starting at west.
const NEIGHBOURS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, -1),
    (0, -1),
    (1, -1),
    (1, 0),
    (1, 1),
    (0, 1),
    (-1, 1),
];

/// Component labels (0 = background, 1.. in raster order of first pixel).
#[derive(Debug, Clone)]
pub struct Components {
    pub labels: Grid<u32>,
    /// `areas[k]` is the pixel count of label `k + 1`.
    pub areas: Vec<usize>,
}

pub fn label_components(mask: &Mask) -> Components {
    let (w, h) = mask.dims();
    let mut labels = Grid::filled(w, h, 0u32);
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for y in 0..h {
        for x in 0..w {
            if !*mask.get(x, y) || *labels.get(x, y) != 0 {
                continue;
            }
            let label = areas.len() as u32 + 1;
            let mut area = 0;
            labels.set(x, y, label);
            queue.push_back((x as i64, y as i64));
            while let Some((cx, cy)) = queue.pop_front() {
                area += 1;
                for (dx, dy) in NEIGHBOURS {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if mask.is_set(nx, ny) && *labels.get(nx as usize, ny as usize) == 0 {
                        labels.set(nx as usize, ny as usize, label);
                        queue.push_back((nx, ny));
                    }
                }
            }
            areas.push(area);
        }
    }
    Components { labels, areas }
}

/// The largest 8-connected component; ties go to the one met first in
/// raster order.
pub fn largest_component(mask: &Mask) -> Result<Mask, ImgeoError> {
    let comps = label_components(mask);
    let (best, _) = comps
        .areas
        .iter()
        .enumerate()
        .fold((None, 0usize), |(bi, ba), (i, &a)| {
            if a > ba {
                (Some(i), a)
            } else {
                (bi, ba)
            }
        });
    let label = best.ok_or(ImgeoError::EmptyMask)? as u32 + 1;
    Ok(comps.labels.map(|&l| l == label))
}

fn direction_index(from: (i64, i64), to: (i64, i64)) -> usize {
    let d = (to.0 - from.0, to.1 - from.1);
    NEIGHBOURS
        .iter()
        .position(|&n| n == d)
        .expect("backtrack pixel is a Moore neighbour")
}

/// Outer boundary of the largest component, counter-clockwise as seen on
/// screen, starting from its top-most, left-most pixel. Each boundary pixel
/// appears once.
pub fn find_external_contour(mask: &Mask) -> Result<Vec<(i64, i64)>, ImgeoError> {
    let comp = largest_component(mask)?;
    let start = comp
        .iter_xy()
        .find(|(_, _, &v)| v)
        .map(|(x, y, _)| (x as i64, y as i64))
        .ok_or(ImgeoError::EmptyMask)?;

    // Clockwise Moore trace; entering `start` from the west is always valid
    // because nothing precedes it in raster order.
    let mut trace = vec![start];
    let mut current = start;
    let mut backtrack = (start.0 - 1, start.1);
    let limit = 4 * comp.width() * comp.height() + 8;
    loop {
        let k = direction_index(current, backtrack);
        let mut next = None;
        for i in 1..=8 {
            let (dx, dy) = NEIGHBOURS[(k + i) % 8];
            let cand = (current.0 + dx, current.1 + dy);
            if comp.is_set(cand.0, cand.1) {
                let (bx, by) = NEIGHBOURS[(k + i - 1) % 8];
                next = Some((cand, (current.0 + bx, current.1 + by)));
                break;
            }
        }
        let Some((next, new_backtrack)) = next else {
            break; // isolated pixel
        };
        if current == start && trace.len() > 1 && next == trace[1] {
            break;
        }
        trace.push(next);
        current = next;
        backtrack = new_backtrack;
        if trace.len() > limit {
            break;
        }
    }
    // The closing step re-appends `start`; keep first occurrences only.
    let mut seen = Grid::filled(comp.width(), comp.height(), false);
    let mut unique = Vec::with_capacity(trace.len());
    for p in trace {
        let flag = seen.get_mut(p.0 as usize, p.1 as usize);
        if !*flag {
            *flag = true;
            unique.push(p);
        }
    }
    unique[1..].reverse();
    Ok(unique)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signed_area(c: &[(i64, i64)]) -> i64 {
        let n = c.len();
        (0..n)
            .map(|i| {
                let (a, b) = (c[i], c[(i + 1) % n]);
                a.0 * b.1 - b.0 * a.1
            })
            .sum()
    }

    #[test]
    fn filled_square_has_eight_boundary_pixels() {
        let mut m = Mask::filled(5, 5, false);
        for y in 1..4 {
            for x in 1..4 {
                m.set(x, y, true);
            }
        }
        let c = find_external_contour(&m).unwrap();
        assert_eq!(c.len(), 8);
        assert!(!c.contains(&(2, 2)));
        assert_eq!(c[0], (1, 1));
        // Counter-clockwise on screen ⇔ negative shoelace sum with y down.
        assert!(signed_area(&c) < 0);
    }

    #[test]
    fn single_pixel_and_empty() {
        let mut m = Mask::filled(3, 3, false);
        assert_eq!(find_external_contour(&m), Err(ImgeoError::EmptyMask));
        m.set(1, 1, true);
        assert_eq!(find_external_contour(&m).unwrap(), vec![(1, 1)]);
    }

    #[test]
    fn disk_boundary_lies_on_its_radius() {
        let m = Mask::disk(41, 41, 20.0, 20.0, 10.0);
        let c = find_external_contour(&m).unwrap();
        for &(x, y) in &c {
            let r = (((x - 20) * (x - 20) + (y - 20) * (y - 20)) as f64).sqrt();
            assert!((r - 10.0).abs() <= 1.0, "pixel ({x},{y}) at radius {r}");
        }
        // Boundary oracle: positives with a 4-neighbour outside the disk.
        let expected = m
            .positives()
            .into_iter()
            .filter(|&(x, y)| {
                [(1, 0), (-1, 0), (0, 1), (0, -1)]
                    .iter()
                    .any(|(dx, dy)| !m.is_set(x + dx, y + dy))
            })
            .count();
        assert_eq!(c.len(), expected);
        assert!(signed_area(&c) < 0);
    }

    #[test]
    fn picks_largest_component() {
        let mut m = Mask::filled(30, 30, false);
        for y in 2..12 {
            for x in 15..25 {
                m.set(x, y, true); // area 100
            }
        }
        for y in 20..23 {
            for x in 1..4 {
                m.set(x, y, true); // area 9
            }
        }
        let comps = label_components(&m);
        let mut areas = comps.areas.clone();
        areas.sort();
        assert_eq!(areas, vec![9, 100]);
        let c = find_external_contour(&m).unwrap();
        assert!(c.iter().all(|&(x, y)| (15..25).contains(&x) && (2..12).contains(&y)));
        assert_eq!(c.len(), 36);
    }

    #[test]
    fn ring_contour_is_outer_boundary_only() {
        let m = Mask::annulus(41, 41, 20.0, 20.0, 6.0, 10.0);
        let c = find_external_contour(&m).unwrap();
        for &(x, y) in &c {
            let r = (((x - 20) * (x - 20) + (y - 20) * (y - 20)) as f64).sqrt();
            assert!(r > 8.5);
        }
    }

    #[test]
    fn thin_diagonal_line_visits_each_pixel_once() {
        let mut m = Mask::filled(10, 10, false);
        for i in 1..8 {
            m.set(i, i, true);
        }
        let c = find_external_contour(&m).unwrap();
        assert_eq!(c.len(), 7);
    }
}
