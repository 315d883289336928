//! Box and trajectory geometry: IoU, enclosing boxes and volumetric IoU.

use crate::data::{BBox, Span, Trajectory};

pub fn intersection_area(a: &BBox, b: &BBox) -> f64 {
    let w = a.x_max.min(b.x_max) - a.x_min.max(b.x_min);
    let h = a.y_max.min(b.y_max) - a.y_min.max(b.y_min);
    if w <= 0.0 || h <= 0.0 {
        0.0
    } else {
        w * h
    }
}

/// Intersection over union; 0 when the union has no area.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = intersection_area(a, b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Smallest box enclosing both.
pub fn union_box(a: &BBox, b: &BBox) -> BBox {
    BBox {
        x_min: a.x_min.min(b.x_min),
        y_min: a.y_min.min(b.y_min),
        x_max: a.x_max.max(b.x_max),
        y_max: a.y_max.max(b.y_max),
    }
}

/// Frames shared by two trajectories (possibly empty).
pub fn temporal_overlap(a: &Trajectory, b: &Trajectory) -> Span {
    a.span().intersect(&b.span())
}

/// Box-center velocity at `frame`, in pixels per frame, by finite difference
/// over `[frame - window, frame + window]` clipped to the trajectory.
pub fn center_velocity(t: &Trajectory, frame: u32, window: u32) -> (f64, f64) {
    let span = t.span();
    let lo = frame.saturating_sub(window).max(span.begin);
    let hi = (frame + window).min(span.end - 1);
    match (t.box_at(lo), t.box_at(hi)) {
        (Some(a), Some(b)) if hi > lo => {
            let (a, b) = (a.center(), b.center());
            let dt = (hi - lo) as f64;
            ((b.0 - a.0) / dt, (b.1 - a.1) / dt)
        }
        _ => (0.0, 0.0),
    }
}

/// Volumetric IoU of two whole trajectories.
pub fn viou(a: &Trajectory, b: &Trajectory) -> f64 {
    viou_within(a, a.span(), b, b.span())
}

/// Volumetric IoU with each trajectory restricted to a window of frames.
///
/// Frames where only one (clipped) trajectory exists add that box's area to
/// the union and nothing to the intersection.
pub fn viou_within(a: &Trajectory, window_a: Span, b: &Trajectory, window_b: Span) -> f64 {
    let sa = a.span().intersect(&window_a);
    let sb = b.span().intersect(&window_b);
    let mut inter = 0.0;
    let mut union = 0.0;
    for (span, traj) in [(sa, a), (sb, b)] {
        for t in span.frames() {
            union += traj.box_at(t).map_or(0.0, BBox::area);
        }
    }
    for t in sa.intersect(&sb).frames() {
        let (ba, bb) = (a.box_at(t).unwrap(), b.box_at(t).unwrap());
        let i = intersection_area(ba, bb);
        inter += i;
        union -= i;
    }
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bbox(x0: f64, y0: f64, x1: f64, y1: f64) -> BBox {
        BBox::new(x0, y0, x1, y1).unwrap()
    }

    fn traj(id: u64, begin: u32, boxes: Vec<BBox>) -> Trajectory {
        let span = Span::new(begin, begin + boxes.len() as u32);
        Trajectory::new(id, 0, span, boxes, 1).unwrap()
    }

    /// Counts unit cells covered by integer boxes.
    fn raster_iou(a: &BBox, b: &BBox) -> f64 {
        let (mut inter, mut union) = (0u32, 0u32);
        for x in -5..40 {
            for y in -5..40 {
                let cx = x as f64 + 0.5;
                let cy = y as f64 + 0.5;
                let inside = |r: &BBox| r.x_min < cx && cx < r.x_max && r.y_min < cy && cy < r.y_max;
                let (ia, ib) = (inside(a), inside(b));
                inter += (ia && ib) as u32;
                union += (ia || ib) as u32;
            }
        }
        if union == 0 {
            0.0
        } else {
            inter as f64 / union as f64
        }
    }

    #[test]
    fn iou_examples() {
        let a = bbox(0.0, 0.0, 10.0, 10.0);
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &bbox(20.0, 20.0, 30.0, 30.0)), 0.0);
        let b = bbox(5.0, 0.0, 15.0, 10.0);
        let expected = raster_iou(&a, &b);
        assert!((expected - 50.0 / 150.0).abs() < 1e-12);
        assert!((box_iou(&a, &b) - expected).abs() < 1e-12);
        assert_eq!(box_iou(&bbox(1.0, 1.0, 1.0, 1.0), &bbox(1.0, 1.0, 1.0, 1.0)), 0.0);
    }

    #[test]
    fn union_box_examples() {
        let unit = bbox(0.0, 0.0, 1.0, 1.0);
        assert_eq!(union_box(&unit, &unit), unit);
        assert_eq!(
            union_box(&unit, &bbox(2.0, 2.0, 3.0, 3.0)),
            bbox(0.0, 0.0, 3.0, 3.0)
        );
        assert_eq!(
            union_box(&bbox(0.0, 5.0, 2.0, 9.0), &bbox(1.0, 0.0, 3.0, 6.0)),
            bbox(0.0, 0.0, 3.0, 9.0)
        );
    }

    #[test]
    fn viou_examples() {
        let a = traj(0, 3, vec![bbox(0.0, 0.0, 10.0, 10.0); 5]);
        assert_eq!(viou(&a, &a), 1.0);
        let later = traj(1, 20, vec![bbox(0.0, 0.0, 10.0, 10.0); 5]);
        assert_eq!(viou(&a, &later), 0.0);
        let p = traj(2, 7, vec![bbox(0.0, 0.0, 10.0, 10.0)]);
        let q = traj(3, 7, vec![bbox(5.0, 0.0, 15.0, 10.0)]);
        assert!((viou(&p, &q) - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn viou_counts_unshared_frames_in_union() {
        // Two frames shared with identical boxes, two more frames on `a` only.
        let a = traj(0, 0, vec![bbox(0.0, 0.0, 2.0, 2.0); 4]);
        let b = traj(1, 0, vec![bbox(0.0, 0.0, 2.0, 2.0); 2]);
        assert!((viou(&a, &b) - 0.5).abs() < 1e-12);
        assert!((viou_within(&a, Span::new(0, 2), &b, b.span()) - 1.0).abs() < 1e-12);
    }

    fn arb_traj(id: u64) -> impl Strategy<Value = Trajectory> {
        (0u32..10, proptest::collection::vec((0.0f64..20.0, 0.0f64..20.0, 0.0f64..10.0, 0.0f64..10.0), 1..8))
            .prop_map(move |(begin, raw)| {
                let boxes = raw.into_iter().map(|(x, y, w, h)| bbox(x, y, x + w, y + h)).collect();
                traj(id, begin, boxes)
            })
    }

    proptest! {
        #[test]
        fn viou_is_symmetric_and_bounded(a in arb_traj(0), b in arb_traj(1)) {
            let ab = viou(&a, &b);
            prop_assert!((0.0..=1.0).contains(&ab));
            prop_assert!((ab - viou(&b, &a)).abs() < 1e-12);
        }

        #[test]
        fn viou_self_is_one(a in arb_traj(0)) {
            prop_assume!(a.boxes().iter().any(|b| b.area() > 0.0));
            prop_assert!((viou(&a, &a) - 1.0).abs() < 1e-12);
        }

        #[test]
        fn trimming_unshared_frames_never_lowers_viou(a in arb_traj(0), b in arb_traj(1)) {
            let shared = temporal_overlap(&a, &b);
            prop_assume!(!shared.is_empty());
            let full = viou(&a, &b);
            let trimmed = viou_within(&a, shared, &b, shared);
            prop_assert!(trimmed + 1e-12 >= full);
        }
    }
}
