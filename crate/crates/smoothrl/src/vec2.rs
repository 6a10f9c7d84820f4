//! Tiny fixed-size helpers for planar vectors.

pub type Vec2 = [f64; 2];

pub fn add(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] + b[0], a[1] + b[1]]
}

pub fn sub(a: Vec2, b: Vec2) -> Vec2 {
    [a[0] - b[0], a[1] - b[1]]
}

pub fn scale(a: Vec2, s: f64) -> Vec2 {
    [a[0] * s, a[1] * s]
}

pub fn norm(a: Vec2) -> f64 {
    a[0].hypot(a[1])
}

pub fn dist(a: Vec2, b: Vec2) -> f64 {
    norm(sub(a, b))
}
