//! Binary erosion and dilation with disk structuring elements.

use ndarray::Array2;

/// Half-widths of a digital disk of radius `r`, one per row offset `-r..=r`.
fn disk_rows(radius: usize) -> Vec<(isize, usize)> {
    let r = radius as isize;
    (-r..=r)
        .map(|dy| {
            let w = (((r * r - dy * dy) as f64).sqrt() + 1e-9).floor() as usize;
            (dy, w)
        })
        .collect()
}

/// Per-row prefix counts of set pixels: `pre[[y, x]]` counts `0..x`.
fn row_prefix(mask: &Array2<bool>) -> Array2<u32> {
    let (h, w) = mask.dim();
    let mut pre = Array2::zeros((h, w + 1));
    for y in 0..h {
        let mut acc = 0;
        for x in 0..w {
            acc += u32::from(mask[[y, x]]);
            pre[[y, x + 1]] = acc;
        }
    }
    pre
}

/// Pixels outside the image count as background, so objects touching the
/// border erode from it.
pub fn erode_disk(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dim();
    let pre = row_prefix(mask);
    let rows = disk_rows(radius);
    Array2::from_shape_fn((h, w), |(y, x)| {
        rows.iter().all(|&(dy, hw)| {
            let yy = y as isize + dy;
            if yy < 0 || yy >= h as isize || x < hw || x + hw >= w {
                return false;
            }
            let yy = yy as usize;
            (pre[[yy, x + hw + 1]] - pre[[yy, x - hw]]) as usize == 2 * hw + 1
        })
    })
}

pub fn dilate_disk(mask: &Array2<bool>, radius: usize) -> Array2<bool> {
    if radius == 0 {
        return mask.clone();
    }
    let (h, w) = mask.dim();
    let pre = row_prefix(mask);
    let rows = disk_rows(radius);
    Array2::from_shape_fn((h, w), |(y, x)| {
        rows.iter().any(|&(dy, hw)| {
            let yy = y as isize + dy;
            if yy < 0 || yy >= h as isize {
                return false;
            }
            let yy = yy as usize;
            let lo = x.saturating_sub(hw);
            let hi = (x + hw).min(w - 1);
            pre[[yy, hi + 1]] > pre[[yy, lo]]
        })
    })
}
