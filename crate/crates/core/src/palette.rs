/// Display colors for part ids; index 0 here is part 0. Cycles past the end.
const PART_COLORS: [[u8; 3]; 12] = [
    [230, 190, 40],
    [200, 40, 40],
    [40, 170, 60],
    [60, 90, 220],
    [150, 230, 80],
    [90, 190, 240],
    [220, 110, 30],
    [160, 60, 200],
    [250, 150, 140],
    [120, 130, 250],
    [60, 210, 190],
    [240, 90, 200],
];

pub fn part_color(part: usize) -> [u8; 3] {
    PART_COLORS[part % PART_COLORS.len()]
}

/// PNG palette for label maps: entry 0 is background, entry `i + 1` is part `i`.
pub fn label_palette(parts: usize) -> Vec<u8> {
    let mut p = vec![0, 0, 0];
    for i in 0..parts {
        p.extend_from_slice(&part_color(i));
    }
    p
}
