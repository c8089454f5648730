//! Procedural level synthesis and controlled corruption.

use std::fmt;
use std::str::FromStr;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng as _;

use super::constraints::build_pipe_constraint;
use super::level::{GridLevel, Tile};
use crate::formula::Formula;
use crate::rng::{derived, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Style {
    /// Ground with height changes, a few one-wide gaps and one or two pipes.
    Pipes,
    /// As `Pipes` without pipes.
    NoPipes,
    /// Ground with wider gaps and tall pipes; a large share is unplayable.
    Gaps,
    /// Mixture used for switchable properties: pipes and bottom-row gaps
    /// are each present in about half of the levels, independently.
    Mixed,
}

impl FromStr for Style {
    type Err = String;
    fn from_str(s: &str) -> Result<Style, String> {
        Ok(match s {
            "pipes" => Style::Pipes,
            "no-pipes" => Style::NoPipes,
            "gaps" => Style::Gaps,
            "mixed" => Style::Mixed,
            _ => return Err(format!("unknown dataset style `{s}`")),
        })
    }
}

impl fmt::Display for Style {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Style::Pipes => "pipes",
            Style::NoPipes => "no-pipes",
            Style::Gaps => "gaps",
            Style::Mixed => "mixed",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    pub procedure: String,
    pub corruption_rate: f64,
    pub corrupted: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub levels: Vec<GridLevel>,
    pub provenance: Provenance,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.levels.first().map(|l| (l.height(), l.width()))
    }
}

struct Layout {
    ground: Vec<usize>,
    gaps: usize,
    max_gap: usize,
    pipes: usize,
    pipe_heights: &'static [usize],
    platforms: bool,
}

fn layout(rng: &mut Rng, h: usize, w: usize, style: Style) -> Layout {
    let max_ground = (h / 2).saturating_sub(1).clamp(1, 3);
    let mut ground = Vec::with_capacity(w);
    let mut g = rng.random_range(1..=max_ground.min(2));
    for _ in 0..w {
        if rng.random_bool(0.25) {
            g = if rng.random_bool(0.5) { g + 1 } else { g.saturating_sub(1) };
            g = g.clamp(1, max_ground);
        }
        ground.push(g);
    }
    let (gaps, max_gap, pipes, pipe_heights, platforms) = match style {
        Style::Pipes => (rng.random_range(0..=1), 1, rng.random_range(1..=2), &[2, 2, 3][..], true),
        Style::NoPipes => (rng.random_range(0..=1), 1, 0, &[2][..], true),
        Style::Gaps => (rng.random_range(1..=2), 3, rng.random_range(0..=1), &[2, 3][..], false),
        Style::Mixed => (
            if rng.random_bool(0.5) { rng.random_range(1..=2) } else { 0 },
            2,
            if rng.random_bool(0.5) { 1 } else { 0 },
            &[2][..],
            false,
        ),
    };
    Layout {
        ground,
        gaps,
        max_gap,
        pipes,
        pipe_heights,
        platforms,
    }
}

fn synth_level(rng: &mut Rng, h: usize, w: usize, style: Style) -> GridLevel {
    let mut lay = layout(rng, h, w, style);
    // gaps never touch column 0, so every level has a start cell
    for _ in 0..lay.gaps {
        let width = rng.random_range(1..=lay.max_gap).min(w.saturating_sub(2).max(1));
        if w < 3 {
            break;
        }
        let c0 = rng.random_range(1..w - 1);
        for c in c0..(c0 + width).min(w - 1) {
            lay.ground[c] = 0;
        }
    }
    let mut lvl = GridLevel::filled(h, w, Tile::Empty);
    for (c, &g) in lay.ground.iter().enumerate() {
        for r in h - g..h {
            lvl.set(r, c, Tile::Solid);
        }
    }
    let mut used = vec![false; w];
    for _ in 0..lay.pipes {
        let candidates: Vec<usize> = (0..w.saturating_sub(1))
            .filter(|&c| {
                lay.ground[c] > 0
                    && lay.ground[c] == lay.ground[c + 1]
                    && !used[c]
                    && !used[c + 1]
            })
            .collect();
        let Some(&c) = candidates.choose(rng) else {
            break;
        };
        let g = lay.ground[c];
        let ph = *lay.pipe_heights.choose(rng).unwrap();
        if h < g + ph {
            continue;
        }
        let top = h - g - ph;
        lvl.set(top, c, Tile::PipeTopLeft);
        lvl.set(top, c + 1, Tile::PipeTopRight);
        for r in top + 1..h - g {
            lvl.set(r, c, Tile::PipeBodyLeft);
            lvl.set(r, c + 1, Tile::PipeBodyRight);
        }
        used[c] = true;
        used[c + 1] = true;
        if c > 0 {
            used[c - 1] = true;
        }
        if c + 2 < w {
            used[c + 2] = true;
        }
    }
    if lay.platforms && rng.random_bool(0.3) && w >= 4 {
        let len = rng.random_range(2..=3);
        let c0 = rng.random_range(0..=w - len);
        let base = (c0..c0 + len).map(|c| lay.ground[c]).max().unwrap();
        if (c0..c0 + len).all(|c| !used[c]) && h >= base + 4 {
            let r = h - base - 3;
            for c in c0..c0 + len {
                lvl.set(r, c, Tile::Solid);
            }
        }
    }
    lvl
}

/// Synthesizes `n` levels. Every level satisfies the pipe constraint.
pub fn synth_dataset(n: usize, height: usize, width: usize, style: Style, seed: u64) -> Dataset {
    let mut rng = derived(seed, 0x5157);
    let check = build_pipe_constraint(height, width).ok();
    let levels = (0..n)
        .map(|_| {
            let l = synth_level(&mut rng, height, width, style);
            if let Some(f) = &check {
                assert!(
                    f.evaluate_bits(&l.encode()).unwrap(),
                    "synthesized level violates the pipe constraint:\n{l}"
                );
            }
            l
        })
        .collect();
    Dataset {
        levels,
        provenance: Provenance {
            procedure: format!("synth:{style}"),
            corruption_rate: 0.0,
            corrupted: 0,
            seed,
        },
    }
}

/// Applies one random pipe-breaking edit. Returns `None` when the edit
/// failed to break the constraint (the caller retries).
fn mutate(rng: &mut Rng, l: &GridLevel, f: &Formula) -> Option<GridLevel> {
    let (h, w) = (l.height(), l.width());
    let mut m = l.clone();
    let tops: Vec<(usize, usize)> = (0..h)
        .flat_map(|r| (0..w).map(move |c| (r, c)))
        .filter(|&(r, c)| l.get(r, c) == Tile::PipeTopLeft)
        .collect();
    let kind = if tops.is_empty() { 2 } else { rng.random_range(0..3) };
    match kind {
        0 => {
            // top-left loses its right half
            let &(r, c) = tops.choose(rng)?;
            m.set(r, c + 1, Tile::Empty);
        }
        1 => {
            // top-left loses the body below it
            let &(r, c) = tops.choose(rng)?;
            m.set(r + 1, c, Tile::Empty);
        }
        _ => {
            // a lone pipe tile in an empty cell
            let empty: Vec<(usize, usize)> = (0..h)
                .flat_map(|r| (0..w).map(move |c| (r, c)))
                .filter(|&(r, c)| l.get(r, c) == Tile::Empty)
                .collect();
            let &(r, c) = empty.choose(rng)?;
            m.set(r, c, Tile::PipeTopLeft);
        }
    }
    (!f.evaluate_bits(&m.encode()).ok()?).then_some(m)
}

/// Corrupts exactly `round(rate · n)` levels, chosen uniformly without
/// replacement, with a pipe-breaking edit. Corrupted levels violate the
/// pipe constraint.
pub fn corrupt_dataset(d: &Dataset, rate: f64, seed: u64) -> Dataset {
    assert!((0.0..=1.0).contains(&rate), "corruption rate must lie in [0, 1]");
    let n = d.levels.len();
    let k = (rate * n as f64).round() as usize;
    let mut out = d.clone();
    out.provenance.corruption_rate = rate;
    out.provenance.corrupted = k;
    out.provenance.procedure = format!("{}+corrupt", d.provenance.procedure);
    if k == 0 {
        return out;
    }
    let Some((h, w)) = d.shape() else {
        return out;
    };
    let f = build_pipe_constraint(h, w).expect("corruption needs a grid of at least 2x2");
    let mut rng = derived(seed, 0xC0DE);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    for &i in &idx[..k] {
        let mutated = loop {
            if let Some(m) = mutate(&mut rng, &d.levels[i], &f) {
                break m;
            }
        };
        out.levels[i] = mutated;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synth_is_valid_and_deterministic() {
        let f = build_pipe_constraint(8, 8).unwrap();
        let d = synth_dataset(100, 8, 8, Style::Pipes, 3);
        assert_eq!(d.len(), 100);
        assert!(d.levels.iter().all(|l| f.evaluate_bits(&l.encode()).unwrap()));
        assert!(d.levels.iter().any(|l| l.pipe_tiles() > 0));
        assert_eq!(d, synth_dataset(100, 8, 8, Style::Pipes, 3));
        assert_ne!(d.levels, synth_dataset(100, 8, 8, Style::Pipes, 4).levels);
    }

    #[test]
    fn no_pipes_style() {
        let d = synth_dataset(50, 8, 8, Style::NoPipes, 1);
        assert!(d.levels.iter().all(|l| l.pipe_tiles() == 0));
    }

    #[test]
    fn corruption_counts() {
        let f = build_pipe_constraint(8, 8).unwrap();
        let d = synth_dataset(1000, 8, 8, Style::Pipes, 9);
        assert_eq!(corrupt_dataset(&d, 0.0, 1), d.clone().tap_rate(0.0));
        let c = corrupt_dataset(&d, 0.1, 1);
        let invalid = c
            .levels
            .iter()
            .filter(|l| !f.evaluate_bits(&l.encode()).unwrap())
            .count();
        assert_eq!(invalid, 100);
        assert_eq!(c.provenance.corrupted, 100);
        let all = corrupt_dataset(&synth_dataset(40, 8, 8, Style::NoPipes, 2), 1.0, 5);
        assert!(all.levels.iter().all(|l| !f.evaluate_bits(&l.encode()).unwrap()));
    }

    impl Dataset {
        fn tap_rate(mut self, rate: f64) -> Dataset {
            self.provenance.corruption_rate = rate;
            self.provenance.procedure.push_str("+corrupt");
            self
        }
    }
}
