//! Axis-aligned rectangle arithmetic.
//!
//! Everything here is generic over any ordered field ([`Coord`]), so the same
//! code runs on `f32`, `f64` and exact rationals such as
//! `num_rational::Ratio<i64>`. Integer types satisfy the bound but IoU would
//! truncate, so use a field type.

use num_traits::Num;
use serde::{Deserialize, Serialize};

/// Numeric types rectangles can be built from.
pub trait Coord: Num + PartialOrd + Copy {}

impl<T: Num + PartialOrd + Copy> Coord for T {}

#[inline]
fn min<T: PartialOrd>(a: T, b: T) -> T {
    if b < a {
        b
    } else {
        a
    }
}

#[inline]
fn max<T: PartialOrd>(a: T, b: T) -> T {
    if b > a {
        b
    } else {
        a
    }
}

#[inline]
fn clamp<T: PartialOrd>(v: T, lo: T, hi: T) -> T {
    min(max(v, lo), hi)
}

/// An axis-aligned box in window coordinates, `x1 <= x2` and `y1 <= y2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect<T> {
    pub x1: T,
    pub y1: T,
    pub x2: T,
    pub y2: T,
}

impl<T: Coord> Rect<T> {
    pub fn new(x1: T, y1: T, x2: T, y2: T) -> Self {
        Rect { x1, y1, x2, y2 }
    }

    pub fn width(&self) -> T {
        self.x2 - self.x1
    }

    pub fn height(&self) -> T {
        self.y2 - self.y1
    }

    pub fn area(&self) -> T {
        self.width() * self.height()
    }

    /// Corner ordering holds.
    pub fn is_ordered(&self) -> bool {
        self.x1 <= self.x2 && self.y1 <= self.y2
    }

    /// Swaps corners where needed so that `x1 <= x2` and `y1 <= y2`.
    pub fn canonicalize(self) -> Self {
        Rect {
            x1: min(self.x1, self.x2),
            x2: max(self.x1, self.x2),
            y1: min(self.y1, self.y2),
            y2: max(self.y1, self.y2),
        }
    }

    pub fn is_inside(&self, window_size: T) -> bool {
        let z = T::zero();
        [self.x1, self.y1, self.x2, self.y2]
            .iter()
            .all(|&c| c >= z && c <= window_size)
    }

    pub fn to_array(self) -> [T; 4] {
        [self.x1, self.y1, self.x2, self.y2]
    }

    pub fn from_slice(c: &[T]) -> Self {
        Rect::new(c[0], c[1], c[2], c[3])
    }
}

/// Area of the geometric intersection, zero when the boxes are disjoint.
pub fn intersection_area<T: Coord>(a: &Rect<T>, b: &Rect<T>) -> T {
    let w = min(a.x2, b.x2) - max(a.x1, b.x1);
    let h = min(a.y2, b.y2) - max(a.y1, b.y1);
    let z = T::zero();
    if w <= z || h <= z {
        z
    } else {
        w * h
    }
}

pub fn union_area<T: Coord>(a: &Rect<T>, b: &Rect<T>) -> T {
    a.area() + b.area() - intersection_area(a, b)
}

/// Intersection over union. Returns zero when the union is empty, so pairs
/// involving degenerate boxes contribute nothing.
pub fn iou<T: Coord>(a: &Rect<T>, b: &Rect<T>) -> T {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union > T::zero() {
        inter / union
    } else {
        T::zero()
    }
}

/// Sum of IoU over every unordered pair, accumulated with `i` ascending and
/// then `j` ascending.
pub fn total_overlap<T: Coord>(rects: &[Rect<T>]) -> T {
    let mut sum = T::zero();
    for i in 0..rects.len() {
        for j in (i + 1)..rects.len() {
            sum = sum + iou(&rects[i], &rects[j]);
        }
    }
    sum
}

/// Clamps every coordinate into `[0, window_size]`.
pub fn clip_to_window<T: Coord>(r: &Rect<T>, window_size: T) -> Rect<T> {
    let z = T::zero();
    Rect {
        x1: clamp(r.x1, z, window_size),
        y1: clamp(r.y1, z, window_size),
        x2: clamp(r.x2, z, window_size),
        y2: clamp(r.y2, z, window_size),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;
    use proptest::prelude::*;

    fn r(x1: f64, y1: f64, x2: f64, y2: f64) -> Rect<f64> {
        Rect::new(x1, y1, x2, y2)
    }

    /// Counts unit pixels covered by integer-coordinate boxes.
    fn raster_iou(a: [u32; 4], b: [u32; 4]) -> (u32, u32) {
        let mut inter = 0;
        let mut union = 0;
        for x in 0..32 {
            for y in 0..32 {
                let ia = x >= a[0] && x < a[2] && y >= a[1] && y < a[3];
                let ib = x >= b[0] && x < b[2] && y >= b[1] && y < b[3];
                inter += u32::from(ia && ib);
                union += u32::from(ia || ib);
            }
        }
        (inter, union)
    }

    #[test]
    fn intersection_examples() {
        let a = r(0., 0., 10., 10.);
        assert_eq!(intersection_area(&a, &a), 100.0);
        assert_eq!(intersection_area(&a, &r(20., 20., 30., 30.)), 0.0);
        let (inter, _) = raster_iou([0, 0, 10, 10], [5, 0, 15, 10]);
        assert_eq!(inter, 50);
        assert_eq!(intersection_area(&a, &r(5., 0., 15., 10.)), f64::from(inter));
    }

    #[test]
    fn iou_examples() {
        let a = r(0., 0., 10., 10.);
        assert_eq!(iou(&a, &a), 1.0);
        assert_eq!(iou(&a, &r(20., 20., 30., 30.)), 0.0);
        let (inter, union) = raster_iou([0, 0, 10, 10], [5, 0, 15, 10]);
        assert_eq!((inter, union), (50, 150));
        assert_eq!(iou(&a, &r(5., 0., 15., 10.)), 1.0 / 3.0);
    }

    #[test]
    fn degenerate_boxes_have_zero_iou() {
        let p = r(3., 3., 3., 3.);
        assert_eq!(iou(&p, &p), 0.0);
        let line = r(0., 5., 10., 5.);
        assert_eq!(iou(&line, &r(0., 0., 10., 10.)), 0.0);
    }

    #[test]
    fn total_overlap_examples() {
        assert_eq!(total_overlap(&[r(0., 0., 10., 10.)]), 0.0);
        let a = r(1., 2., 30., 40.);
        assert_eq!(total_overlap(&[a, a, a]), 3.0);
        let rects = [r(0., 0., 10., 10.), r(5., 0., 15., 10.), r(100., 100., 110., 110.)];
        assert_eq!(total_overlap(&rects), 1.0 / 3.0);
    }

    #[test]
    fn clip_examples() {
        assert_eq!(clip_to_window(&r(-5., 3., 20., 140.), 128.), r(0., 3., 20., 128.));
        let inside = r(1., 2., 50., 60.);
        assert_eq!(clip_to_window(&inside, 128.), inside);
        assert_eq!(
            clip_to_window(&r(130., 130., 140., 140.), 128.),
            r(128., 128., 128., 128.)
        );
    }

    #[test]
    fn exact_rational_iou() {
        let q = |n: i64, d: i64| Ratio::new(n, d);
        let a = Rect::new(q(0, 1), q(0, 1), q(10, 1), q(10, 1));
        let b = Rect::new(q(5, 1), q(0, 1), q(15, 1), q(10, 1));
        assert_eq!(iou(&a, &b), q(1, 3));
        let c = Rect::new(q(1, 2), q(1, 3), q(7, 2), q(10, 3));
        // inter = 3 * 3, union = 9 + 100 - 9
        assert_eq!(iou(&a, &c), q(9, 100));
    }

    fn arb_rect() -> impl Strategy<Value = Rect<f64>> {
        (0.0..128.0f64, 0.0..128.0f64, 0.0..128.0f64, 0.0..128.0f64)
            .prop_map(|(a, b, c, d)| Rect::new(a, b, c, d).canonicalize())
    }

    proptest! {
        #[test]
        fn iou_symmetric_and_bounded(a in arb_rect(), b in arb_rect()) {
            let ab = iou(&a, &b);
            prop_assert_eq!(ab, iou(&b, &a));
            prop_assert!((0.0..=1.0).contains(&ab));
            if a.area() > 0.0 {
                prop_assert_eq!(iou(&a, &a), 1.0);
            }
        }

        #[test]
        fn clip_keeps_invariants(x1 in -50.0..200.0f64, y1 in -50.0..200.0f64,
                                 w in 0.0..100.0f64, h in 0.0..100.0f64) {
            let c = clip_to_window(&r(x1, y1, x1 + w, y1 + h), 128.0);
            prop_assert!(c.is_ordered());
            prop_assert!(c.is_inside(128.0));
        }
    }
}
