//! Locale-independent numeric formatting shared by every text and CSV
//! output surface.

/// Format a raw value with 17 significant digits in scientific
/// notation; round-trips any finite f64 exactly and is independent of
/// locale.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Format an optional value, empty when absent.
pub fn fmt_opt(x: Option<f64>) -> String {
    x.map(fmt_f64).unwrap_or_default()
}
