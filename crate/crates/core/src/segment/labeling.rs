//! Connected-component labeling by flood fill.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        match self {
            Connectivity::Four => &[(-1, 0), (1, 0), (0, -1), (0, 1)],
            Connectivity::Eight => &[
                (-1, -1),
                (-1, 0),
                (-1, 1),
                (0, -1),
                (0, 1),
                (1, -1),
                (1, 0),
                (1, 1),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Component {
    /// Label value in the label image, starting at 1.
    pub label: u32,
    pub area: usize,
    /// `[row, col]`.
    pub centroid: [f64; 2],
    pub touches_border: bool,
}

/// Returns the label image (0 = background) and per-component statistics,
/// ordered by label. Labels follow raster order of each component's first
/// pixel.
pub fn label_components(mask: &Array2<bool>, conn: Connectivity) -> (Array2<u32>, Vec<Component>) {
    let (h, w) = mask.dim();
    let mut labels = Array2::<u32>::zeros((h, w));
    let mut comps = Vec::new();
    let mut stack = Vec::new();
    for y0 in 0..h {
        for x0 in 0..w {
            if !mask[[y0, x0]] || labels[[y0, x0]] != 0 {
                continue;
            }
            let label = comps.len() as u32 + 1;
            labels[[y0, x0]] = label;
            stack.push((y0, x0));
            let (mut area, mut sy, mut sx) = (0usize, 0.0, 0.0);
            let mut touches_border = false;
            while let Some((y, x)) = stack.pop() {
                area += 1;
                sy += y as f64;
                sx += x as f64;
                touches_border |= y == 0 || x == 0 || y + 1 == h || x + 1 == w;
                for &(dy, dx) in conn.offsets() {
                    let (yy, xx) = (y as isize + dy, x as isize + dx);
                    if yy < 0 || xx < 0 || yy >= h as isize || xx >= w as isize {
                        continue;
                    }
                    let (yy, xx) = (yy as usize, xx as usize);
                    if mask[[yy, xx]] && labels[[yy, xx]] == 0 {
                        labels[[yy, xx]] = label;
                        stack.push((yy, xx));
                    }
                }
            }
            comps.push(Component {
                label,
                area,
                centroid: [sy / area as f64, sx / area as f64],
                touches_border,
            });
        }
    }
    (labels, comps)
}
