//! First alignment stage: move and resize the in-shop clothing so that its
//! bounding box matches the person's clothing region in location and height.

use crate::error::{Error, Result};
use crate::person::{ParsingMap, UPPER_CLOTHES};
use crate::tensor::{bilinear_sample_into, BinaryMask, ImageTensor};

/// Inclusive axis-aligned pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x_min: usize,
    pub x_max: usize,
    pub y_min: usize,
    pub y_max: usize,
}

impl Rect {
    #[inline]
    pub fn contains(&self, x: usize, y: usize) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn height(&self) -> usize {
        self.y_max - self.y_min + 1
    }

    pub fn width(&self) -> usize {
        self.x_max - self.x_min + 1
    }
}

/// Smallest rectangle holding every set pixel.
pub fn circumscribed_rect(mask: &BinaryMask) -> Result<Rect> {
    let mut rect: Option<Rect> = None;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if !mask.get(y, x) {
                continue;
            }
            rect = Some(match rect {
                None => Rect { x_min: x, x_max: x, y_min: y, y_max: y },
                Some(r) => Rect {
                    x_min: r.x_min.min(x),
                    x_max: r.x_max.max(x),
                    y_min: r.y_min.min(y),
                    y_max: r.y_max.max(y),
                },
            });
        }
    }
    rect.ok_or_else(|| Error::EmptyRegion("mask has no set pixels".into()))
}

/// `(x, y)` centre of the rectangle.
pub fn rect_center(r: &Rect) -> (f64, f64) {
    ((r.x_min + r.x_max) as f64 / 2.0, (r.y_min + r.y_max) as f64 / 2.0)
}

/// Height in rows of the mask's bounding box.
pub fn clothing_height(mask: &BinaryMask) -> Result<usize> {
    Ok(circumscribed_rect(mask)?.height())
}

/// Output of [`prealign`].
#[derive(Debug, Clone)]
pub struct PreAlignResult {
    /// Clothing translated onto the person's clothing centre (`C_l`).
    pub shifted: ImageTensor,
    pub shifted_mask: BinaryMask,
    /// Translated and rescaled clothing (`C_s`).
    pub scaled: ImageTensor,
    pub scaled_mask: BinaryMask,
    /// Integer translation applied, `(dx, dy)` in pixels.
    pub shift: (f64, f64),
    /// `h_s / h_t`: source clothing height over target clothing height.
    pub ratio: f64,
}

fn translate_image(img: &ImageTensor, dx: isize, dy: isize) -> ImageTensor {
    let (c, h, w) = img.shape();
    ImageTensor::from_fn(c, h, w, |ch, y, x| {
        let (sy, sx) = (y as isize - dy, x as isize - dx);
        if sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w {
            img.get(ch, sy as usize, sx as usize)
        } else {
            0.0
        }
    })
}

fn translate_mask(mask: &BinaryMask, dx: isize, dy: isize) -> BinaryMask {
    let (h, w) = (mask.height(), mask.width());
    BinaryMask::from_fn(h, w, |y, x| {
        let (sy, sx) = (y as isize - dy, x as isize - dx);
        sy >= 0 && sx >= 0 && (sy as usize) < h && (sx as usize) < w && mask.get(sy as usize, sx as usize)
    })
}

/// Aligns the in-shop clothing `cloth` (with mask `cloth_mask`) to the
/// upper-clothes region of `parsing`.
///
/// The clothing is translated by the rounded centre difference, then scaled
/// about its new centre by `h_t / h_s` so its height matches the person's
/// clothing. The image is resampled bilinearly, the mask by nearest
/// neighbour; both are zero outside the source.
pub fn prealign(cloth: &ImageTensor, cloth_mask: &BinaryMask, parsing: &ParsingMap) -> Result<PreAlignResult> {
    let (h, w) = (cloth_mask.height(), cloth_mask.width());
    cloth.ensure_spatial(h, w, "prealign")?;
    parsing.ensure_spatial(h, w, "prealign")?;

    let source = circumscribed_rect(cloth_mask)
        .map_err(|_| Error::EmptyRegion("in-shop clothing mask is empty".into()))?;
    let target = circumscribed_rect(&parsing.class_mask(&[UPPER_CLOTHES])?)
        .map_err(|_| Error::EmptyRegion("person parsing map has no clothing pixels".into()))?;

    let (sx, sy) = rect_center(&source);
    let (tx, ty) = rect_center(&target);
    let dx = (tx - sx).round();
    let dy = (ty - sy).round();
    let shifted = translate_image(cloth, dx as isize, dy as isize);
    let shifted_mask = translate_mask(cloth_mask, dx as isize, dy as isize);

    let ratio = source.height() as f64 / target.height() as f64;
    let (ax, ay) = (sx + dx, sy + dy);
    let src_coord = |x: usize, y: usize| (ax + (x as f64 - ax) * ratio, ay + (y as f64 - ay) * ratio);

    let mut scaled = ImageTensor::zeros(cloth.channels(), h, w);
    let mut px = vec![0.0; cloth.channels()];
    for y in 0..h {
        for x in 0..w {
            let (xs, ys) = src_coord(x, y);
            bilinear_sample_into(&shifted, xs, ys, &mut px);
            for (c, v) in px.iter().enumerate() {
                scaled.set(c, y, x, *v);
            }
        }
    }
    let scaled_mask = BinaryMask::from_fn(h, w, |y, x| {
        let (xs, ys) = src_coord(x, y);
        let (xr, yr) = (xs.round(), ys.round());
        xr >= 0.0
            && yr >= 0.0
            && (xr as usize) < w
            && (yr as usize) < h
            && shifted_mask.get(yr as usize, xr as usize)
    });

    Ok(PreAlignResult { shifted, shifted_mask, scaled, scaled_mask, shift: (dx, dy), ratio })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::person::BACKGROUND;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rect_mask(h: usize, w: usize, r: Rect) -> BinaryMask {
        BinaryMask::from_fn(h, w, |y, x| r.contains(x, y))
    }

    fn rect_parsing(h: usize, w: usize, r: Rect) -> ParsingMap {
        ParsingMap::from_fn(h, w, |y, x| if r.contains(x, y) { UPPER_CLOTHES } else { BACKGROUND })
            .unwrap()
    }

    #[test]
    fn rect_of_full_and_single_masks() {
        let full = BinaryMask::ones(7, 9);
        assert_eq!(circumscribed_rect(&full).unwrap(), Rect { x_min: 0, x_max: 8, y_min: 0, y_max: 6 });
        let mut one = BinaryMask::zeros(7, 9);
        one.set(3, 5, true);
        assert_eq!(circumscribed_rect(&one).unwrap(), Rect { x_min: 5, x_max: 5, y_min: 3, y_max: 3 });
        assert!(matches!(circumscribed_rect(&BinaryMask::zeros(3, 3)), Err(Error::EmptyRegion(_))));
    }

    #[test]
    fn rect_matches_scan_on_sparse_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..50 {
            let m = BinaryMask::from_fn(13, 17, |_, _| rng.gen_bool(0.05));
            if m.is_empty() {
                continue;
            }
            let set: Vec<(usize, usize)> =
                (0..13).flat_map(|y| (0..17).map(move |x| (y, x))).filter(|&(y, x)| m.get(y, x)).collect();
            let r = circumscribed_rect(&m).unwrap();
            assert_eq!(r.x_min, set.iter().map(|p| p.1).min().unwrap());
            assert_eq!(r.x_max, set.iter().map(|p| p.1).max().unwrap());
            assert_eq!(r.y_min, set.iter().map(|p| p.0).min().unwrap());
            assert_eq!(r.y_max, set.iter().map(|p| p.0).max().unwrap());
            let (cx, cy) = rect_center(&r);
            assert_eq!(cx, (r.x_min + r.x_max) as f64 * 0.5);
            assert_eq!(cy, (r.y_min + r.y_max) as f64 * 0.5);
            assert_eq!(clothing_height(&m).unwrap(), r.y_max - r.y_min + 1);
        }
    }

    #[test]
    fn centers_and_heights() {
        assert_eq!(rect_center(&Rect { x_min: 0, x_max: 10, y_min: 0, y_max: 20 }), (5.0, 10.0));
        assert_eq!(rect_center(&Rect { x_min: 3, x_max: 3, y_min: 7, y_max: 7 }), (3.0, 7.0));
        let row = BinaryMask::from_fn(5, 5, |y, _| y == 2);
        assert_eq!(clothing_height(&row).unwrap(), 1);
        let band = BinaryMask::from_fn(12, 5, |y, x| (2..=9).contains(&y) && x == 1);
        assert_eq!(clothing_height(&band).unwrap(), 8);
    }

    #[test]
    fn identity_alignment() {
        let r = Rect { x_min: 10, x_max: 30, y_min: 12, y_max: 40 };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let cloth = ImageTensor::from_fn(3, 64, 48, |_, _, _| rng.gen::<f64>());
        let res = prealign(&cloth, &rect_mask(64, 48, r), &rect_parsing(64, 48, r)).unwrap();
        assert_eq!(res.shift, (0.0, 0.0));
        assert_eq!(res.ratio, 1.0);
        assert!(res.scaled.max_abs_diff(&cloth).unwrap() <= 1e-6);
        assert_eq!(res.scaled_mask, rect_mask(64, 48, r));
    }

    #[test]
    fn shift_moves_centers_together() {
        // Centre (10, 20) in the clothing image, (14, 26) on the person.
        let src = Rect { x_min: 6, x_max: 14, y_min: 14, y_max: 26 };
        let dst = Rect { x_min: 10, x_max: 18, y_min: 20, y_max: 32 };
        assert_eq!(rect_center(&src), (10.0, 20.0));
        assert_eq!(rect_center(&dst), (14.0, 26.0));
        let mask = rect_mask(48, 40, src);
        let res = prealign(&mask.to_tensor(), &mask, &rect_parsing(48, 40, dst)).unwrap();
        assert_eq!(res.shift, (4.0, 6.0));
        let moved = circumscribed_rect(&res.shifted_mask).unwrap();
        assert_eq!(rect_center(&moved), (14.0, 26.0));
        assert_eq!(res.shifted_mask.count(), mask.count());
    }

    #[test]
    fn halving_height() {
        let src = Rect { x_min: 20, x_max: 60, y_min: 10, y_max: 109 };
        let dst = Rect { x_min: 30, x_max: 50, y_min: 35, y_max: 84 };
        let mask = rect_mask(128, 96, src);
        let res = prealign(&mask.to_tensor(), &mask, &rect_parsing(128, 96, dst)).unwrap();
        assert_eq!(res.ratio, 2.0);
        let h = clothing_height(&res.scaled_mask).unwrap();
        assert!((49..=51).contains(&h), "height {h}");
    }

    #[test]
    fn empty_regions_are_errors() {
        let r = Rect { x_min: 1, x_max: 3, y_min: 1, y_max: 3 };
        let img = ImageTensor::zeros(3, 8, 8);
        assert!(matches!(
            prealign(&img, &BinaryMask::zeros(8, 8), &rect_parsing(8, 8, r)),
            Err(Error::EmptyRegion(_))
        ));
        assert!(matches!(
            prealign(&img, &rect_mask(8, 8, r), &ParsingMap::uniform(8, 8, BACKGROUND).unwrap()),
            Err(Error::EmptyRegion(_))
        ));
    }
}
