use std::ops::{Add, Mul, Sub};

/// A point in image coordinates (origin top-left, y down).
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn dot(self, other: Point) -> f64 {
        self.x * other.x + self.y * other.y
    }

    pub fn distance(self, other: Point) -> f64 {
        (self - other).norm()
    }

    pub fn midpoint(self, other: Point) -> Point {
        Point::new(0.5 * (self.x + other.x), 0.5 * (self.y + other.y))
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

/// Distance from `p` to the closed segment `a..b`.
pub fn distance_to_segment(p: Point, a: Point, b: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.distance(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.distance(a + ab * t)
}

/// Calls `f(x, y)` for every pixel whose center lies within `width / 2` of
/// the segment `a..b`, clipped to a `cols x rows` grid. Pixel `(x, y)` has its
/// center at integer coordinates `(x, y)`.
pub fn for_each_capsule_pixel(
    a: Point,
    b: Point,
    width: f64,
    cols: u32,
    rows: u32,
    mut f: impl FnMut(u32, u32),
) {
    let r = 0.5 * width;
    if !(a.is_finite() && b.is_finite() && r.is_finite()) || cols == 0 || rows == 0 {
        return;
    }
    let x0 = (a.x.min(b.x) - r).floor().max(0.0);
    let x1 = (a.x.max(b.x) + r).ceil().min(f64::from(cols - 1));
    let y0 = (a.y.min(b.y) - r).floor().max(0.0);
    let y1 = (a.y.max(b.y) + r).ceil().min(f64::from(rows - 1));
    if x0 > x1 || y0 > y1 {
        return;
    }
    for y in y0 as u32..=y1 as u32 {
        for x in x0 as u32..=x1 as u32 {
            let p = Point::new(f64::from(x), f64::from(y));
            if distance_to_segment(p, a, b) <= r {
                f(x, y);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_distance_cases() {
        let a = Point::new(0.0, 0.0);
        let b = Point::new(10.0, 0.0);
        assert_eq!(distance_to_segment(Point::new(5.0, 3.0), a, b), 3.0);
        assert_eq!(distance_to_segment(Point::new(-3.0, 4.0), a, b), 5.0);
        assert_eq!(distance_to_segment(Point::new(1.0, 1.0), a, a), 2f64.sqrt());
    }

    #[test]
    fn capsule_clips_to_grid() {
        let mut n = 0;
        for_each_capsule_pixel(Point::new(-5.0, -5.0), Point::new(-4.0, -4.0), 3.0, 8, 8, |_, _| {
            n += 1
        });
        assert_eq!(n, 0);
        let mut hits = Vec::new();
        for_each_capsule_pixel(Point::new(0.0, 0.0), Point::new(0.0, 0.0), 1.0, 8, 8, |x, y| {
            hits.push((x, y))
        });
        assert_eq!(hits, vec![(0, 0)]);
    }
}
