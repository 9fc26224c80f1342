use serde::{Deserialize, Serialize};

/// Scores of a 2x2 caption/image quartet: `sIJ = score(caption I, image J)`.
/// For edit pairs index 0 is the original and 1 the edited version.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadScores<T = f64> {
    pub s00: T,
    pub s01: T,
    pub s10: T,
    pub s11: T,
}

impl<T: num_traits::Float> QuadScores<T> {
    pub fn new(s00: T, s01: T, s10: T, s11: T) -> Self {
        QuadScores { s00, s01, s10, s11 }
    }

    pub fn is_finite(&self) -> bool {
        [self.s00, self.s01, self.s10, self.s11].iter().all(|v| v.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct WinogroundOutcome {
    pub text: bool,
    pub image: bool,
    pub group: bool,
}

/// Text score: each image prefers its own caption. Image score: each caption
/// prefers its own image. Group: both. All comparisons strict.
pub fn winoground_scores<T: PartialOrd + Copy>(q: &QuadScores<T>) -> WinogroundOutcome {
    let text = q.s00 > q.s10 && q.s11 > q.s01;
    let image = q.s00 > q.s01 && q.s11 > q.s10;
    WinogroundOutcome { text, image, group: text && image }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MagicBrushOutcome {
    pub f: bool,
    pub g: bool,
    pub h: bool,
}

/// Relaxed quartet score for edited images: `f` asks that the original
/// image prefer the original caption, `g` that the edited caption prefer the
/// edited image. A high `s01` (original caption on edited image) is not
/// penalized.
pub fn magicbrush_group<T: PartialOrd + Copy>(q: &QuadScores<T>) -> MagicBrushOutcome {
    let f = q.s00 > q.s10;
    let g = q.s11 > q.s10;
    MagicBrushOutcome { f, g, h: f && g }
}

/// 1 when the caption scores higher with its positive image.
pub fn pair_image_score<T: PartialOrd>(s_pos: T, s_neg: T) -> u8 {
    u8::from(s_pos > s_neg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(a: f64, b: f64, c: f64, d: f64) -> QuadScores {
        QuadScores::new(a, b, c, d)
    }

    #[test]
    fn winoground_examples() {
        assert_eq!(
            winoground_scores(&q(0.9, 0.2, 0.1, 0.8)),
            WinogroundOutcome { text: true, image: true, group: true }
        );
        assert_eq!(
            winoground_scores(&q(0.2, 0.9, 0.8, 0.1)),
            WinogroundOutcome { text: false, image: false, group: false }
        );
        assert_eq!(
            winoground_scores(&q(0.5, 0.5, 0.5, 0.5)),
            WinogroundOutcome { text: false, image: false, group: false }
        );
    }

    #[test]
    fn magicbrush_examples() {
        assert_eq!(magicbrush_group(&q(0.9, 0.9, 0.1, 0.8)), MagicBrushOutcome { f: true, g: true, h: true });
        let tie = magicbrush_group(&q(0.4, 0.1, 0.4, 0.9));
        assert!(!tie.f && !tie.h);
        assert_eq!(magicbrush_group(&q(0.9, 0.1, 0.2, 0.1)), MagicBrushOutcome { f: true, g: false, h: false });
    }

    #[test]
    fn pair_image() {
        assert_eq!(pair_image_score(0.8, 0.3), 1);
        assert_eq!(pair_image_score(0.3, 0.8), 0);
        assert_eq!(pair_image_score(0.5, 0.5), 0);
    }
}
