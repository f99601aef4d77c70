use pokegrasp::dataset::InstancePlan;
use pokegrasp::grid::Mask;
use pokegrasp::io;
use pokegrasp::render::RenderBuffers;
use pokegrasp::scene::{project, CameraModel};

const BACKGROUND: [u8; 3] = [32, 32, 40];
const REGION: [u8; 3] = [40, 200, 80];
const POKE: [u8; 3] = [230, 40, 40];
const FINGER: [u8; 3] = [60, 110, 240];
const CLOSING: [u8; 3] = [240, 210, 60];

struct Canvas {
    width: usize,
    height: usize,
    px: Vec<[u8; 3]>,
}

impl Canvas {
    fn put(&mut self, u: i64, v: i64, c: [u8; 3]) {
        if u >= 0 && v >= 0 && (u as usize) < self.width && (v as usize) < self.height {
            self.px[v as usize * self.width + u as usize] = c;
        }
    }

    fn square(&mut self, u: i64, v: i64, r: i64, c: [u8; 3]) {
        for dv in -r..=r {
            for du in -r..=r {
                self.put(u + du, v + dv, c);
            }
        }
    }

    fn line(&mut self, a: (f64, f64), b: (f64, f64), c: [u8; 3]) {
        let n = (b.0 - a.0).abs().max((b.1 - a.1).abs()).ceil().max(1.0) as usize;
        for k in 0..=n {
            let t = k as f64 / n as f64;
            let u = a.0 + t * (b.0 - a.0);
            let v = a.1 + t * (b.1 - a.1);
            self.put(u.round() as i64, v.round() as i64, c);
        }
    }
}

/// Depth-shaded objects with the poking regions tinted, the poking pixel
/// marked and each grasp drawn as two finger squares joined by the closing
/// line.
pub fn overlay(buffers: &RenderBuffers, regions: &[Mask], plans: &[&InstancePlan], camera: &CameraModel) -> Vec<u8> {
    let (w, h) = (buffers.width(), buffers.height());
    let finite = buffers.depth.as_slice().iter().copied().filter(|d| d.is_finite());
    let (lo, hi) = finite.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), d| (a.min(d), b.max(d)));
    let span = (hi - lo).max(1e-9);
    let mut canvas = Canvas {
        width: w,
        height: h,
        px: buffers
            .depth
            .as_slice()
            .iter()
            .zip(buffers.instance.as_slice())
            .map(|(&d, &id)| {
                if !d.is_finite() {
                    BACKGROUND
                } else if id == 0 {
                    let g = (90.0 + 60.0 * (hi - d) / span) as u8;
                    [g, g, g]
                } else {
                    let g = (120.0 + 120.0 * (hi - d) / span) as u8;
                    [g, g, g]
                }
            })
            .collect(),
    };
    for region in regions {
        for (u, v) in region.positives() {
            let i = v as usize * w + u as usize;
            let base = canvas.px[i];
            canvas.px[i] = [0, 1, 2].map(|c| ((base[c] as u16 + REGION[c] as u16) / 2) as u8);
        }
    }
    for plan in plans {
        if let Some(g) = &plan.grasp {
            let e = g.closing_direction();
            let c = g.center();
            let ends = [c - 0.5 * g.w * e, c + 0.5 * g.w * e].map(|p| project(camera, &p).ok());
            if let [Some(a), Some(b)] = ends {
                canvas.line(a, b, CLOSING);
                for p in [a, b] {
                    canvas.square(p.0.round() as i64, p.1.round() as i64, 2, FINGER);
                }
            }
        }
        if let Some(p) = &plan.poke {
            canvas.square(p.point_px.0, p.point_px.1, 1, POKE);
        }
    }
    io::encode_ppm(w, h, &canvas.px)
}
