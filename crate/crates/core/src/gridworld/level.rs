use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum LevelError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("levels in a dataset must share dimensions ({expected:?} vs {got:?})")]
    ShapeMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("encoding has {got} bits, expected {expected}")]
    EncodingLength { expected: usize, got: usize },
    #[error("cell {cell} is not one-hot")]
    NotOneHot { cell: usize },
}

/// Tile alphabet. The discriminant is the tile's offset inside a cell's
/// one-hot block.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tile {
    Empty = 0,
    Solid = 1,
    PipeTopLeft = 2,
    PipeTopRight = 3,
    PipeBodyLeft = 4,
    PipeBodyRight = 5,
}

pub const NUM_TILES: usize = 6;

impl Tile {
    pub const ALL: [Tile; NUM_TILES] = [
        Tile::Empty,
        Tile::Solid,
        Tile::PipeTopLeft,
        Tile::PipeTopRight,
        Tile::PipeBodyLeft,
        Tile::PipeBodyRight,
    ];

    pub fn from_index(i: usize) -> Tile {
        Tile::ALL[i]
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn to_char(self) -> char {
        match self {
            Tile::Empty => '.',
            Tile::Solid => '#',
            Tile::PipeTopLeft => 'L',
            Tile::PipeTopRight => 'R',
            Tile::PipeBodyLeft => '[',
            Tile::PipeBodyRight => ']',
        }
    }

    pub fn from_char(c: char) -> Option<Tile> {
        Some(match c {
            '.' => Tile::Empty,
            '#' => Tile::Solid,
            'L' => Tile::PipeTopLeft,
            'R' => Tile::PipeTopRight,
            '[' => Tile::PipeBodyLeft,
            ']' => Tile::PipeBodyRight,
            _ => return None,
        })
    }

    /// Short tag used in variable names.
    pub fn tag(self) -> &'static str {
        match self {
            Tile::Empty => "E",
            Tile::Solid => "S",
            Tile::PipeTopLeft => "TL",
            Tile::PipeTopRight => "TR",
            Tile::PipeBodyLeft => "BL",
            Tile::PipeBodyRight => "BR",
        }
    }

    pub fn is_pipe(self) -> bool {
        matches!(
            self,
            Tile::PipeTopLeft | Tile::PipeTopRight | Tile::PipeBodyLeft | Tile::PipeBodyRight
        )
    }

    /// Blocks movement and supports the player.
    pub fn is_solid(self) -> bool {
        self != Tile::Empty
    }
}

/// An H×W tile grid, rows top to bottom.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridLevel {
    height: usize,
    width: usize,
    tiles: Vec<Tile>,
}

impl GridLevel {
    pub fn filled(height: usize, width: usize, tile: Tile) -> GridLevel {
        GridLevel {
            height,
            width,
            tiles: vec![tile; height * width],
        }
    }

    pub fn from_tiles(height: usize, width: usize, tiles: Vec<Tile>) -> GridLevel {
        assert_eq!(tiles.len(), height * width, "tile count must equal H*W");
        GridLevel {
            height,
            width,
            tiles,
        }
    }

    /// Builds a level from per-cell tile indices (row-major).
    pub fn from_indices(height: usize, width: usize, idx: &[usize]) -> GridLevel {
        GridLevel::from_tiles(height, width, idx.iter().map(|&i| Tile::from_index(i)).collect())
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn cells(&self) -> usize {
        self.tiles.len()
    }

    pub fn tiles(&self) -> &[Tile] {
        &self.tiles
    }

    pub fn get(&self, r: usize, c: usize) -> Tile {
        self.tiles[r * self.width + c]
    }

    pub fn set(&mut self, r: usize, c: usize, t: Tile) {
        self.tiles[r * self.width + c] = t;
    }

    pub fn pipe_tiles(&self) -> usize {
        self.tiles.iter().filter(|t| t.is_pipe()).count()
    }

    /// One-hot Boolean view: cell-major, tile-contiguous (`cell * 6 + tile`).
    pub fn encode(&self) -> Vec<bool> {
        let mut bits = vec![false; self.tiles.len() * NUM_TILES];
        for (i, t) in self.tiles.iter().enumerate() {
            bits[i * NUM_TILES + t.index()] = true;
        }
        bits
    }

    pub fn decode(height: usize, width: usize, bits: &[bool]) -> Result<GridLevel, LevelError> {
        let expected = height * width * NUM_TILES;
        if bits.len() != expected {
            return Err(LevelError::EncodingLength {
                expected,
                got: bits.len(),
            });
        }
        let tiles = bits
            .chunks(NUM_TILES)
            .enumerate()
            .map(|(cell, block)| {
                let mut on = block.iter().enumerate().filter(|(_, &b)| b);
                match (on.next(), on.next()) {
                    (Some((i, _)), None) => Ok(Tile::from_index(i)),
                    _ => Err(LevelError::NotOneHot { cell }),
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(GridLevel::from_tiles(height, width, tiles))
    }

    pub fn tile_indices(&self) -> Vec<usize> {
        self.tiles.iter().map(|t| t.index()).collect()
    }

    /// Level file text: `H W` header then one line per row.
    pub fn to_text(&self) -> String {
        format!("{} {}\n{}", self.height, self.width, self)
    }

    pub fn parse(text: &str) -> Result<GridLevel, LevelError> {
        let mut v = parse_levels(text)?;
        match v.len() {
            1 => Ok(v.pop().unwrap()),
            n => Err(LevelError::Parse {
                line: 1,
                message: format!("expected one level, found {n}"),
            }),
        }
    }
}

impl fmt::Display for GridLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for r in 0..self.height {
            let row: String = (0..self.width).map(|c| self.get(r, c).to_char()).collect();
            writeln!(f, "{row}")?;
        }
        Ok(())
    }
}

/// Concatenation of level texts separated by blank lines.
pub fn levels_to_text(levels: &[GridLevel]) -> String {
    levels
        .iter()
        .map(GridLevel::to_text)
        .collect::<Vec<_>>()
        .join("\n")
}

pub fn parse_levels(text: &str) -> Result<Vec<GridLevel>, LevelError> {
    let lines: Vec<&str> = text.lines().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let perr = |line: usize, message: String| LevelError::Parse { line, message };
    while i < lines.len() {
        if lines[i].trim().is_empty() {
            i += 1;
            continue;
        }
        let hdr: Vec<&str> = lines[i].split_whitespace().collect();
        let dims = (hdr.len() == 2)
            .then(|| Some((hdr[0].parse::<usize>().ok()?, hdr[1].parse::<usize>().ok()?)))
            .flatten();
        let Some((h, w)) = dims else {
            return Err(perr(i + 1, format!("expected `H W` header, found `{}`", lines[i])));
        };
        let mut tiles = Vec::with_capacity(h * w);
        for r in 0..h {
            let ln = i + 1 + r;
            let row = lines
                .get(ln)
                .ok_or_else(|| perr(ln + 1, "unexpected end of level".into()))?;
            let row: Vec<char> = row.trim_end().chars().collect();
            if row.len() != w {
                return Err(perr(ln + 1, format!("expected {w} tiles, found {}", row.len())));
            }
            for ch in row {
                tiles.push(
                    Tile::from_char(ch)
                        .ok_or_else(|| perr(ln + 1, format!("unknown tile `{ch}`")))?,
                );
            }
        }
        out.push(GridLevel::from_tiles(h, w, tiles));
        i += 1 + h;
    }
    if let Some(first) = out.first() {
        let want = (first.height, first.width);
        for l in &out {
            if (l.height, l.width) != want {
                return Err(LevelError::ShapeMismatch {
                    expected: want,
                    got: (l.height, l.width),
                });
            }
        }
    }
    Ok(out)
}
