//! Plain-text portable graymap (`P2`) output for escape-time grids.

use std::fmt::Write as _;

use holokan::analysis::EscapeMask;

/// Row-major iteration counts with `maxval = max_iter`; the first row is the
/// top of the window.
pub fn escape_pgm(mask: &EscapeMask) -> String {
    let mut out = format!("P2\n{} {}\n{}\n", mask.nx, mask.ny, mask.max_iter);
    for row in mask.iterations.chunks(mask.nx) {
        let line: Vec<String> = row.iter().map(u32::to_string).collect();
        writeln!(out, "{}", line.join(" ")).expect("string write");
    }
    out
}

/// Parses a `P2` image into `(width, height, maxval, pixels)`.
pub fn parse_pgm(text: &str) -> Option<(usize, usize, u32, Vec<u32>)> {
    let mut tokens = text.lines().filter(|l| !l.starts_with('#')).flat_map(str::split_whitespace);
    if tokens.next()? != "P2" {
        return None;
    }
    let w = tokens.next()?.parse().ok()?;
    let h = tokens.next()?.parse().ok()?;
    let maxval = tokens.next()?.parse().ok()?;
    let pixels: Vec<u32> = tokens.map(|t| t.parse().ok()).collect::<Option<_>>()?;
    (pixels.len() == w * h).then_some((w, h, maxval, pixels))
}
