//! Perceptually uniform ramp for uncertainty images.

/// 32 evenly spaced samples of the viridis ramp, dark to bright.
const VIRIDIS: [[u8; 3]; 32] = [
    [68, 1, 84],
    [71, 13, 96],
    [72, 24, 106],
    [72, 35, 116],
    [71, 46, 124],
    [69, 56, 130],
    [66, 65, 134],
    [62, 74, 137],
    [58, 84, 140],
    [54, 93, 141],
    [50, 101, 142],
    [46, 109, 142],
    [43, 117, 142],
    [40, 125, 142],
    [37, 132, 142],
    [34, 140, 141],
    [31, 148, 140],
    [30, 156, 137],
    [32, 163, 134],
    [37, 171, 130],
    [46, 179, 124],
    [58, 186, 118],
    [72, 193, 110],
    [88, 199, 101],
    [108, 205, 90],
    [127, 211, 78],
    [147, 215, 65],
    [168, 219, 52],
    [192, 223, 37],
    [213, 226, 26],
    [234, 229, 26],
    [253, 231, 37],
];

/// Maps `t in [0,1]` (clamped; NaN maps to 0) onto the ramp with linear
/// interpolation between table entries.
pub fn viridis(t: f64) -> [u8; 3] {
    let t = if t.is_nan() { 0.0 } else { t.clamp(0.0, 1.0) };
    let s = t * (VIRIDIS.len() - 1) as f64;
    let i = (s.floor() as usize).min(VIRIDIS.len() - 2);
    let f = s - i as f64;
    let (a, b) = (VIRIDIS[i], VIRIDIS[i + 1]);
    let mut out = [0u8; 3];
    for c in 0..3 {
        out[c] = ((1.0 - f) * a[c] as f64 + f * b[c] as f64).round() as u8;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_clamping() {
        assert_eq!(viridis(0.0), VIRIDIS[0]);
        assert_eq!(viridis(1.0), VIRIDIS[31]);
        assert_eq!(viridis(-3.0), VIRIDIS[0]);
        assert_eq!(viridis(f64::NAN), VIRIDIS[0]);
        assert_eq!(viridis(7.0), VIRIDIS[31]);
    }

    #[test]
    fn luminance_increases() {
        let lum = |c: [u8; 3]| 0.2126 * c[0] as f64 + 0.7152 * c[1] as f64 + 0.0722 * c[2] as f64;
        let mut prev = -1.0;
        for i in 0..=100 {
            let l = lum(viridis(i as f64 / 100.0));
            assert!(l >= prev - 0.5);
            prev = l;
        }
    }
}
