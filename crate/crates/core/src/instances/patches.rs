use ndarray::Array3;

use crate::dataio::Micrograph;
use crate::error::{Error, Result};
use crate::instances::set::InstanceSet;

/// One patch per instance: the bounding box grown by `padding` and clipped to
/// the image, with pixels outside the instance set to the image median.
pub fn extract_patches(m: &Micrograph, s: &InstanceSet, padding: usize) -> Result<Vec<Micrograph>> {
    if m.height() != s.height || m.width() != s.width {
        return Err(Error::invalid(format!(
            "instance set is {}x{} but image '{}' is {}x{}",
            s.height,
            s.width,
            m.id(),
            m.height(),
            m.width()
        )));
    }
    let fill = m.median();
    let ch = m.channels();
    let src = m.pixels();
    s.instances
        .iter()
        .map(|inst| {
            let (r0, c0, r1, c1) = inst.bbox;
            let (top, left) = (r0.saturating_sub(padding), c0.saturating_sub(padding));
            let bottom = (r1 + padding).min(m.height() - 1);
            let right = (c1 + padding).min(m.width() - 1);
            let (ph, pw) = (bottom - top + 1, right - left + 1);
            let patch = Array3::from_shape_fn((ph, pw, ch), |(r, c, k)| {
                let (gr, gc) = (top + r, left + c);
                if inst.contains(gr * m.width() + gc) {
                    src[[gr, gc, k]]
                } else {
                    fill[k]
                }
            });
            let mut p = Micrograph::new_unchecked_size(format!("{}_inst{}", m.id(), inst.id), patch)?;
            if let Some(scale) = m.scale() {
                p = p.with_scale(scale)?;
            }
            Ok(p)
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(h: usize, w: usize) -> Micrograph {
        Micrograph::from_gray("img", h, w, (0..h * w).map(|i| (i % 251) as u8).collect()).unwrap()
    }

    #[test]
    fn single_pixel_with_padding() {
        let m = ramp(40, 40);
        let s = InstanceSet::new(40, 40, vec![(1, vec![20 * 40 + 20])]).unwrap();
        let p = extract_patches(&m, &s, 8).unwrap();
        assert_eq!((p[0].height(), p[0].width()), (17, 17));
        assert_eq!(p[0].pixels()[[8, 8, 0]], m.pixels()[[20, 20, 0]]);
        assert_eq!(p[0].pixels()[[0, 0, 0]], m.median()[0]);
        assert_eq!(p[0].id(), "img_inst1");
    }

    #[test]
    fn padding_clips_at_edges() {
        let m = ramp(40, 40);
        let s = InstanceSet::new(40, 40, vec![(1, vec![0, 1, 40])]).unwrap();
        let p = extract_patches(&m, &s, 5).unwrap();
        assert_eq!((p[0].height(), p[0].width()), (7, 7));
    }

    #[test]
    fn zero_padding_is_masked_crop() {
        let m = ramp(40, 40);
        let pixels = vec![41, 42, 43, 83];
        let s = InstanceSet::new(40, 40, vec![(4, pixels.clone()), (9, vec![400])]).unwrap();
        let p = extract_patches(&m, &s, 0).unwrap();
        assert_eq!(p.len(), s.len());
        assert_eq!((p[0].height(), p[0].width()), (2, 3));
        for r in 0..2 {
            for c in 0..3 {
                let g = (1 + r) * 40 + 1 + c;
                let want = if pixels.contains(&g) { m.pixels()[[1 + r, 1 + c, 0]] } else { m.median()[0] };
                assert_eq!(p[0].pixels()[[r, c, 0]], want);
            }
        }
    }
}
