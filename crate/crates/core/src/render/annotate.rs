//! Set-of-mark style id labels drawn with a fixed bitmap font.

use image::{Rgb, RgbImage};

pub const MARK_COLOR: Rgb<u8> = Rgb([255, 0, 0]);
pub const OUTLINE_COLOR: Rgb<u8> = Rgb([255, 255, 255]);
pub const VIEW_LABEL_COLOR: Rgb<u8> = Rgb([0, 0, 0]);

const GLYPH_W: i64 = 5;
const GLYPH_H: i64 = 7;

// 5x7 digits, one row per byte, bit 4 is the leftmost column.
const DIGITS: [[u8; 7]; 10] = [
    [0b01110, 0b10001, 0b10011, 0b10101, 0b11001, 0b10001, 0b01110],
    [0b00100, 0b01100, 0b00100, 0b00100, 0b00100, 0b00100, 0b01110],
    [0b01110, 0b10001, 0b00001, 0b00010, 0b00100, 0b01000, 0b11111],
    [0b11111, 0b00010, 0b00100, 0b00010, 0b00001, 0b10001, 0b01110],
    [0b00010, 0b00110, 0b01010, 0b10010, 0b11111, 0b00010, 0b00010],
    [0b11111, 0b10000, 0b11110, 0b00001, 0b00001, 0b10001, 0b01110],
    [0b00110, 0b01000, 0b10000, 0b11110, 0b10001, 0b10001, 0b01110],
    [0b11111, 0b00001, 0b00010, 0b00100, 0b01000, 0b01000, 0b01000],
    [0b01110, 0b10001, 0b10001, 0b01110, 0b10001, 0b10001, 0b01110],
    [0b01110, 0b10001, 0b10001, 0b01111, 0b00001, 0b00010, 0b01100],
];

/// Font scale for an image: glyph pixels are `scale × scale` blocks.
pub fn label_scale(width: u32, height: u32) -> i64 {
    (width.min(height) as i64 / 256).max(2)
}

/// Size in pixels of `text` drawn at `scale` (without outline).
pub fn text_extent(text: &str, scale: i64) -> (i64, i64) {
    let n = text.chars().count() as i64;
    if n == 0 {
        return (0, 0);
    }
    ((n * (GLYPH_W + 1) - 1) * scale, GLYPH_H * scale)
}

fn glyph_cells(text: &str) -> impl Iterator<Item = (i64, i64)> + '_ {
    text.chars().enumerate().flat_map(|(i, ch)| {
        let rows = ch.to_digit(10).map(|d| DIGITS[d as usize]).unwrap_or([0; 7]);
        (0..GLYPH_H).flat_map(move |gy| {
            (0..GLYPH_W).filter_map(move |gx| {
                let on = rows[gy as usize] & (1 << (GLYPH_W - 1 - gx)) != 0;
                on.then_some((i as i64 * (GLYPH_W + 1) + gx, gy))
            })
        })
    })
}

fn fill_rect(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    for y in y0.max(0)..y1.min(h) {
        for x in x0.max(0)..x1.min(w) {
            img.put_pixel(x as u32, y as u32, color);
        }
    }
}

/// Draws digits with their top-left corner at `(x, y)`, surrounded by an
/// outline `scale` pixels wide.
pub fn draw_text(img: &mut RgbImage, text: &str, x: i64, y: i64, scale: i64, fill: Rgb<u8>, outline: Rgb<u8>) {
    let cells: Vec<(i64, i64)> = glyph_cells(text).collect();
    for &(cx, cy) in &cells {
        let (px, py) = (x + cx * scale, y + cy * scale);
        fill_rect(img, px - scale, py - scale, px + 2 * scale, py + 2 * scale, outline);
    }
    for &(cx, cy) in &cells {
        let (px, py) = (x + cx * scale, y + cy * scale);
        fill_rect(img, px, py, px + scale, py + scale, fill);
    }
}

/// Draws `text` centered on pixel `(cx, cy)`.
pub fn draw_text_centered(
    img: &mut RgbImage,
    text: &str,
    cx: i64,
    cy: i64,
    scale: i64,
    fill: Rgb<u8>,
    outline: Rgb<u8>,
) {
    let (tw, th) = text_extent(text, scale);
    draw_text(img, text, cx - tw / 2, cy - th / 2, scale, fill, outline);
}

/// Returns a copy of `image` with each id drawn in red at its pixel and,
/// when given, the view index in the top-left corner. Marks whose pixel is
/// outside the image are skipped.
pub fn annotate(image: &RgbImage, marks: &[(u32, (f64, f64))], view_index: Option<u32>) -> RgbImage {
    let mut out = image.clone();
    let scale = label_scale(out.width(), out.height());
    for &(id, (u, v)) in marks {
        let (px, py) = (u.round() as i64, v.round() as i64);
        if px < 0 || py < 0 || px >= out.width() as i64 || py >= out.height() as i64 {
            continue;
        }
        draw_text_centered(&mut out, &id.to_string(), px, py, scale, MARK_COLOR, OUTLINE_COLOR);
    }
    if let Some(idx) = view_index {
        let margin = 2 * scale;
        draw_text(
            &mut out,
            &idx.to_string(),
            margin,
            margin,
            scale,
            VIEW_LABEL_COLOR,
            OUTLINE_COLOR,
        );
    }
    out
}
