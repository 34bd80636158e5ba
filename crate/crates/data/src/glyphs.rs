//! Procedural handwritten-style characters for running the pipeline without
//! external datasets. Each class is a set of strokes in the unit square
//! (x right, y down); every instance draws them through a random affine map
//! with a random pen width and per-point wobble, onto a 20x20 box centred in
//! a 28x28 canvas like the usual digit datasets.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::idx::RawImages;

pub const SIDE: usize = 28;
const BOX: f64 = 20.0;

type Stroke = Vec<(f64, f64)>;

/// Points along an elliptic arc from `a0` to `a1` degrees (0 = right, 90 = down).
fn arc(cx: f64, cy: f64, rx: f64, ry: f64, a0: f64, a1: f64) -> Stroke {
    let steps = (((a1 - a0).abs() / 15.0).ceil() as usize).max(2);
    (0..=steps)
        .map(|k| {
            let a = (a0 + (a1 - a0) * k as f64 / steps as f64).to_radians();
            (cx + rx * a.cos(), cy + ry * a.sin())
        })
        .collect()
}

fn line(points: &[(f64, f64)]) -> Stroke {
    points.to_vec()
}

fn join(mut a: Stroke, b: Stroke) -> Stroke {
    a.extend(b);
    a
}

fn digit(d: u8) -> Vec<Stroke> {
    match d {
        0 => vec![arc(0.5, 0.5, 0.28, 0.4, 0.0, 360.0)],
        1 => vec![line(&[(0.35, 0.25), (0.5, 0.1), (0.5, 0.9)])],
        2 => vec![join(arc(0.5, 0.3, 0.25, 0.2, 190.0, 400.0), line(&[(0.22, 0.9), (0.8, 0.9)]))],
        3 => vec![join(arc(0.5, 0.3, 0.24, 0.2, 200.0, 450.0), arc(0.5, 0.7, 0.26, 0.2, 270.0, 520.0))],
        4 => vec![line(&[(0.65, 0.9), (0.65, 0.1), (0.2, 0.65), (0.82, 0.65)])],
        5 => vec![join(
            line(&[(0.75, 0.1), (0.3, 0.1), (0.28, 0.48)]),
            arc(0.5, 0.66, 0.26, 0.24, 220.0, 520.0),
        )],
        6 => vec![
            line(&[(0.7, 0.1), (0.45, 0.25), (0.3, 0.45), (0.26, 0.68)]),
            arc(0.5, 0.68, 0.25, 0.22, 0.0, 360.0),
        ],
        7 => vec![line(&[(0.2, 0.1), (0.8, 0.1), (0.4, 0.9)])],
        8 => vec![arc(0.5, 0.3, 0.2, 0.19, 0.0, 360.0), arc(0.5, 0.7, 0.25, 0.21, 0.0, 360.0)],
        9 => vec![
            arc(0.5, 0.32, 0.25, 0.22, 0.0, 360.0),
            line(&[(0.75, 0.32), (0.7, 0.6), (0.5, 0.9)]),
        ],
        _ => panic!("digit {d} out of range"),
    }
}

fn bowl(top: f64, bottom: f64, x0: f64, width: f64) -> Stroke {
    let cy = (top + bottom) / 2.0;
    let ry = (bottom - top) / 2.0;
    join(
        join(line(&[(x0, top)]), arc(x0, cy, width, ry, -90.0, 90.0)),
        line(&[(x0, bottom)]),
    )
}

fn letter(c: u8) -> Vec<Stroke> {
    let o = || arc(0.5, 0.5, 0.3, 0.4, 0.0, 360.0);
    match c {
        0 => vec![line(&[(0.2, 0.9), (0.5, 0.1), (0.8, 0.9)]), line(&[(0.32, 0.6), (0.68, 0.6)])],
        1 => vec![
            line(&[(0.25, 0.9), (0.25, 0.1), (0.5, 0.1)]),
            bowl(0.1, 0.5, 0.5, 0.22),
            bowl(0.5, 0.9, 0.5, 0.27),
            line(&[(0.25, 0.5), (0.5, 0.5)]),
            line(&[(0.25, 0.9), (0.5, 0.9)]),
        ],
        2 => vec![arc(0.55, 0.5, 0.3, 0.4, 320.0, 40.0)],
        3 => vec![line(&[(0.25, 0.1), (0.25, 0.9)]), bowl(0.1, 0.9, 0.3, 0.45)],
        4 => vec![
            line(&[(0.75, 0.1), (0.25, 0.1), (0.25, 0.9), (0.75, 0.9)]),
            line(&[(0.25, 0.5), (0.65, 0.5)]),
        ],
        5 => vec![line(&[(0.75, 0.1), (0.25, 0.1), (0.25, 0.9)]), line(&[(0.25, 0.5), (0.65, 0.5)])],
        6 => vec![join(arc(0.55, 0.5, 0.3, 0.4, 320.0, 0.0), line(&[(0.6, 0.5)]))],
        7 => vec![
            line(&[(0.25, 0.1), (0.25, 0.9)]),
            line(&[(0.75, 0.1), (0.75, 0.9)]),
            line(&[(0.25, 0.5), (0.75, 0.5)]),
        ],
        8 => vec![
            line(&[(0.5, 0.1), (0.5, 0.9)]),
            line(&[(0.35, 0.1), (0.65, 0.1)]),
            line(&[(0.35, 0.9), (0.65, 0.9)]),
        ],
        9 => vec![join(line(&[(0.7, 0.1), (0.7, 0.7)]), arc(0.5, 0.7, 0.2, 0.2, 0.0, 180.0))],
        10 => vec![
            line(&[(0.25, 0.1), (0.25, 0.9)]),
            line(&[(0.75, 0.1), (0.25, 0.55)]),
            line(&[(0.4, 0.45), (0.75, 0.9)]),
        ],
        11 => vec![line(&[(0.25, 0.1), (0.25, 0.9), (0.75, 0.9)])],
        12 => vec![line(&[(0.2, 0.9), (0.2, 0.1), (0.5, 0.6), (0.8, 0.1), (0.8, 0.9)])],
        13 => vec![line(&[(0.25, 0.9), (0.25, 0.1), (0.75, 0.9), (0.75, 0.1)])],
        14 => vec![o()],
        15 => vec![line(&[(0.25, 0.9), (0.25, 0.1)]), bowl(0.1, 0.5, 0.3, 0.42)],
        16 => vec![o(), line(&[(0.55, 0.7), (0.82, 0.95)])],
        17 => vec![
            line(&[(0.25, 0.9), (0.25, 0.1)]),
            bowl(0.1, 0.5, 0.3, 0.42),
            line(&[(0.45, 0.5), (0.75, 0.9)]),
        ],
        18 => vec![join(arc(0.5, 0.3, 0.23, 0.2, 330.0, 90.0), arc(0.5, 0.7, 0.23, 0.2, -90.0, 160.0))],
        19 => vec![line(&[(0.15, 0.1), (0.85, 0.1)]), line(&[(0.5, 0.1), (0.5, 0.9)])],
        20 => vec![join(
            join(line(&[(0.25, 0.1)]), arc(0.5, 0.65, 0.25, 0.25, 180.0, 0.0)),
            line(&[(0.75, 0.1)]),
        )],
        21 => vec![line(&[(0.2, 0.1), (0.5, 0.9), (0.8, 0.1)])],
        22 => vec![line(&[(0.1, 0.1), (0.3, 0.9), (0.5, 0.35), (0.7, 0.9), (0.9, 0.1)])],
        23 => vec![line(&[(0.2, 0.1), (0.8, 0.9)]), line(&[(0.8, 0.1), (0.2, 0.9)])],
        24 => vec![line(&[(0.2, 0.1), (0.5, 0.5), (0.8, 0.1)]), line(&[(0.5, 0.5), (0.5, 0.9)])],
        25 => vec![line(&[(0.2, 0.1), (0.8, 0.1), (0.2, 0.9), (0.8, 0.9)])],
        _ => panic!("letter {c} out of range"),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    /// Classes 0..=9.
    Digits,
    /// Classes 0..=25 for A..Z.
    Letters,
}

impl Family {
    pub fn classes(self) -> u8 {
        match self {
            Family::Digits => 10,
            Family::Letters => 26,
        }
    }

    fn strokes(self, class: u8) -> Vec<Stroke> {
        match self {
            Family::Digits => digit(class),
            Family::Letters => letter(class),
        }
    }
}

/// Ranges of the per-instance random style.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Style {
    pub max_rotation_degrees: f64,
    pub max_shear: f64,
    pub scale: (f64, f64),
    pub pen_width: (f64, f64),
    /// Standard wobble of stroke points, in units of the glyph box.
    pub wobble: f64,
}

impl Default for Style {
    fn default() -> Self {
        Self {
            max_rotation_degrees: 12.0,
            max_shear: 0.3,
            scale: (0.8, 1.05),
            pen_width: (2.2, 3.6),
            wobble: 0.03,
        }
    }
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (qx, qy) = (a.0 + t * dx - p.0, a.1 + t * dy - p.1);
    (qx * qx + qy * qy).sqrt()
}

/// One 28x28 grayscale instance of `class`.
pub fn render<R: Rng>(family: Family, class: u8, style: &Style, rng: &mut R) -> Vec<u8> {
    let r = style.max_rotation_degrees;
    let angle = rng.random_range(-r..=r).to_radians();
    let shear = rng.random_range(-style.max_shear..=style.max_shear);
    let sx = rng.random_range(style.scale.0..=style.scale.1);
    let sy = rng.random_range(style.scale.0..=style.scale.1);
    let pen = rng.random_range(style.pen_width.0..=style.pen_width.1);
    let (sin, cos) = angle.sin_cos();
    let centre = (SIDE as f64 - 1.0) / 2.0;
    let mut segments = Vec::new();
    for stroke in family.strokes(class) {
        let pts: Vec<(f64, f64)> = stroke
            .iter()
            .map(|&(x, y)| {
                let x = x - 0.5 + style.wobble * rng.random_range(-1.0..=1.0);
                let y = y - 0.5 + style.wobble * rng.random_range(-1.0..=1.0);
                let (x, y) = (sx * (x + shear * y), sy * y);
                (centre + BOX * (cos * x - sin * y), centre + BOX * (sin * x + cos * y))
            })
            .collect();
        segments.extend(pts.windows(2).map(|w| (w[0], w[1])));
    }
    let mut out = vec![0u8; SIDE * SIDE];
    for y in 0..SIDE {
        for x in 0..SIDE {
            let p = (x as f64, y as f64);
            let d = segments
                .iter()
                .map(|&(a, b)| segment_distance(p, a, b))
                .fold(f64::INFINITY, f64::min);
            // one-pixel linear ramp at the pen edge
            let ink = (pen / 2.0 - d + 0.5).clamp(0.0, 1.0);
            out[y * SIDE + x] = (255.0 * ink).round() as u8;
        }
    }
    out
}

/// `per_class` instances of every class of `family`, classes interleaved.
pub fn synthesize(family: Family, per_class: usize, style: &Style, seed: u64) -> RawImages {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut raw = RawImages::new(SIDE, SIDE, Vec::new(), Vec::new()).expect("valid dimensions");
    for _ in 0..per_class {
        for class in 0..family.classes() {
            let img = render(family, class, style, &mut rng);
            raw.push(&img, class);
        }
    }
    raw
}
