//! Fixed-precision number formatting shared by every CSV writer.

/// Formats `x` with 9 significant digits, trailing zeros trimmed: plain
/// decimal for magnitudes in `[1e-6, 1e15)`, `1.5e-9` style otherwise.
/// Output depends only on the bits of `x`.
pub fn sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    let sci = format!("{:.8e}", x.abs());
    let (mantissa, exp) = sci
        .split_once('e')
        .expect("scientific format has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    let digits: String = mantissa.chars().filter(char::is_ascii_digit).collect();
    let mut out = String::new();
    if x < 0.0 {
        out.push('-');
    }
    if !(-6..15).contains(&exp) {
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        out.push_str(&format!("{mantissa}e{exp}"));
        return out;
    }
    if exp >= 8 {
        out.push_str(&digits);
        out.extend(std::iter::repeat_n('0', (exp - 8) as usize));
        return out;
    }
    let body = if exp >= 0 {
        let split = exp as usize + 1;
        format!("{}.{}", &digits[..split], &digits[split..])
    } else {
        format!("0.{}{}", "0".repeat((-exp - 1) as usize), digits)
    };
    let body = body.trim_end_matches('0').trim_end_matches('.');
    out.push_str(body);
    out
}
