//! Breadth-first reachability under simplified platformer physics.
//!
//! The player occupies one non-solid cell standing on a solid one. From a
//! standing cell it can move one or two columns left or right while rising
//! at most two rows (the apex), after which it falls straight down to the
//! first standing cell; falling off the bottom of the grid is not a move.
//! Walking on level ground is the `dc = ±1`, zero-rise case.

use std::collections::VecDeque;

use super::level::GridLevel;

/// Movement rules. The defaults are the ones used by every task.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReachSpec {
    pub max_rise: usize,
    pub max_stride: usize,
}

impl Default for ReachSpec {
    fn default() -> Self {
        ReachSpec {
            max_rise: 2,
            max_stride: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reachability {
    height: usize,
    width: usize,
    /// Row-major reachable flags.
    pub cells: Vec<bool>,
    /// `None` when column 0 has no standing cell.
    pub start: Option<(usize, usize)>,
}

impl Reachability {
    pub fn get(&self, r: usize, c: usize) -> bool {
        self.cells[r * self.width + c]
    }

    pub fn no_start(&self) -> bool {
        self.start.is_none()
    }

    /// Reachable flags of the right-most column, top to bottom.
    pub fn last_column(&self) -> Vec<bool> {
        (0..self.height).map(|r| self.get(r, self.width - 1)).collect()
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&b| b).count()
    }
}

fn solid(l: &GridLevel, r: usize, c: usize) -> bool {
    l.get(r, c).is_solid()
}

pub fn is_standable(l: &GridLevel, r: usize, c: usize) -> bool {
    r + 1 < l.height() && !solid(l, r, c) && solid(l, r + 1, c)
}

/// Lowest standing cell of column 0.
pub fn start_cell(l: &GridLevel) -> Option<(usize, usize)> {
    (0..l.height()).rev().find(|&r| is_standable(l, r, 0)).map(|r| (r, 0))
}

fn land(l: &GridLevel, apex: usize, c: usize) -> Option<usize> {
    let mut r = apex;
    while r < l.height() && !solid(l, r, c) {
        if is_standable(l, r, c) {
            return Some(r);
        }
        r += 1;
    }
    None
}

pub fn reachable_tiles(l: &GridLevel, spec: &ReachSpec) -> Reachability {
    let (h, w) = (l.height(), l.width());
    let mut cells = vec![false; h * w];
    let start = start_cell(l);
    if let Some((r0, c0)) = start {
        let mut queue = VecDeque::from([(r0, c0)]);
        cells[r0 * w + c0] = true;
        while let Some((r, c)) = queue.pop_front() {
            for stride in 1..=spec.max_stride {
                for nc in [c.checked_sub(stride), Some(c + stride)].into_iter().flatten() {
                    if nc >= w {
                        continue;
                    }
                    for rise in 0..=spec.max_rise.min(r) {
                        let apex = r - rise;
                        if solid(l, apex, nc) {
                            continue;
                        }
                        if let Some(nr) = land(l, apex, nc) {
                            if !cells[nr * w + nc] {
                                cells[nr * w + nc] = true;
                                queue.push_back((nr, nc));
                            }
                        }
                    }
                }
            }
        }
    }
    Reachability {
        height: h,
        width: w,
        cells,
        start,
    }
}

/// True iff some cell of the right-most column is reachable.
pub fn is_playable(l: &GridLevel) -> bool {
    let r = reachable_tiles(l, &ReachSpec::default());
    r.last_column().into_iter().any(|b| b)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lvl(s: &str) -> GridLevel {
        GridLevel::parse(s).unwrap()
    }

    #[test]
    fn flat_ground_row_is_reachable() {
        let l = lvl("4 6\n......\n......\n......\n######\n");
        let r = reachable_tiles(&l, &ReachSpec::default());
        assert_eq!(r.start, Some((2, 0)));
        assert!((0..6).all(|c| r.get(2, c)));
        assert_eq!(r.count(), 6);
        assert!(is_playable(&l));
    }

    #[test]
    fn wide_gap_blocks() {
        let l = lvl("4 7\n.......\n.......\n.......\n##..###\n");
        let r = reachable_tiles(&l, &ReachSpec::default());
        assert!(r.get(2, 0) && r.get(2, 1));
        assert!(!(2..7).any(|c| r.get(2, c)));
        assert!(!is_playable(&l));
        // a one-wide gap is jumpable
        assert!(is_playable(&lvl("4 5\n.....\n.....\n.....\n##.##\n")));
    }

    #[test]
    fn empty_level_has_no_start() {
        let l = lvl("3 3\n...\n...\n...\n");
        let r = reachable_tiles(&l, &ReachSpec::default());
        assert!(r.no_start());
        assert_eq!(r.count(), 0);
        assert!(!is_playable(&l));
    }

    #[test]
    fn rise_limit() {
        // three-high wall stops the player, two-high does not
        assert!(!is_playable(&lvl("5 4\n....\n..##\n..##\n..##\n####\n")));
        assert!(is_playable(&lvl("5 4\n....\n....\n..##\n..##\n####\n")));
    }

    #[test]
    fn pipes_are_obstacles() {
        let l = lvl("5 5\n.....\n.....\n.LR..\n.[]..\n#####\n");
        let r = reachable_tiles(&l, &ReachSpec::default());
        assert!(r.get(1, 1) && r.get(1, 2) && r.get(3, 3));
        assert!(is_playable(&l));
        // a three-high pipe cannot be climbed from the ground
        assert!(!is_playable(&lvl("5 5\n.....\n.LR..\n.[]..\n.[]..\n#####\n")));
    }

    #[test]
    fn falls_land_on_lower_ground() {
        let l = lvl("5 4\n....\n##..\n##..\n##..\n####\n");
        let r = reachable_tiles(&l, &ReachSpec::default());
        assert_eq!(r.start, Some((0, 0)));
        assert!(r.get(3, 2) && r.get(3, 3));
    }
}
