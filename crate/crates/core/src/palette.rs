//! Piece colour tags.
//!
//! Entries are ordered so that small puzzles draw from the most distinct
//! hues first. Each entry carries a unique grid symbol used by text
//! renderings.

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PaletteEntry {
    pub name: &'static str,
    pub symbol: char,
    pub rgb: [u8; 3],
}

const fn e(name: &'static str, symbol: char, r: u8, g: u8, b: u8) -> PaletteEntry {
    PaletteEntry {
        name,
        symbol,
        rgb: [r, g, b],
    }
}

pub const PALETTE: [PaletteEntry; 32] = [
    e("red", 'R', 230, 25, 75),
    e("blue", 'B', 0, 130, 200),
    e("green", 'G', 60, 180, 75),
    e("yellow", 'Y', 255, 225, 25),
    e("purple", 'P', 145, 30, 180),
    e("orange", 'O', 245, 130, 48),
    e("cyan", 'C', 70, 240, 240),
    e("magenta", 'M', 240, 50, 230),
    e("lime", 'L', 210, 245, 60),
    e("pink", 'K', 250, 190, 212),
    e("teal", 'T', 0, 128, 128),
    e("lavender", 'V', 220, 190, 255),
    e("brown", 'N', 170, 110, 40),
    e("beige", 'E', 255, 250, 200),
    e("maroon", 'A', 128, 0, 0),
    e("mint", 'I', 170, 255, 195),
    e("olive", 'D', 128, 128, 0),
    e("apricot", 'H', 255, 215, 180),
    e("navy", 'Q', 0, 0, 128),
    e("grey", 'U', 128, 128, 128),
    e("white", 'W', 255, 255, 255),
    e("gold", 'F', 218, 165, 32),
    e("indigo", 'J', 75, 0, 130),
    e("salmon", 'S', 250, 128, 114),
    e("turquoise", 'X', 64, 224, 208),
    e("crimson", 'Z', 153, 0, 51),
    e("khaki", 'k', 195, 176, 145),
    e("violet", 'v', 238, 130, 238),
    e("coral", 'o', 255, 127, 80),
    e("skyblue", 's', 135, 206, 235),
    e("forest", 'f', 34, 139, 34),
    e("plum", 'p', 142, 69, 133),
];

pub const EMPTY_SYMBOL: char = '.';

pub fn color_for(index: usize) -> Option<&'static PaletteEntry> {
    PALETTE.get(index)
}

pub fn lookup(name: &str) -> Option<&'static PaletteEntry> {
    PALETTE.iter().find(|p| p.name == name)
}
