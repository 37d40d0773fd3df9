//! CSV formatting shared by every report the crate writes.
//!
//! Dialect: comma separated, one header row, `\n` line endings, no quoting.
//! Reals are printed with 9 significant digits in `%g` style; infinities print
//! as `inf` / `-inf`.

/// Formats `v` like C's `%.9g`.
pub fn sig9(v: f64) -> String {
    format_g(v, 9)
}

/// `%.{precision}g` formatting: shortest of fixed/scientific, trailing zeros trimmed.
pub fn format_g(v: f64, precision: usize) -> String {
    if v.is_nan() {
        return "nan".to_string();
    }
    if v.is_infinite() {
        return if v > 0.0 { "inf" } else { "-inf" }.to_string();
    }
    if v == 0.0 {
        return "0".to_string();
    }
    let precision = precision.max(1);
    // Exponent after rounding to `precision` significant digits.
    let sci = format!("{:.*e}", precision - 1, v);
    let (mantissa, exp) = sci.split_once('e').expect("scientific format has exponent");
    let exp: i32 = exp.parse().expect("exponent is an integer");
    if exp < -4 || exp >= precision as i32 {
        let mantissa = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (precision as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{:.*}", decimals, v)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Accumulates CSV text in the crate's dialect.
#[derive(Debug, Default, Clone)]
pub struct CsvWriter {
    buf: String,
}

impl CsvWriter {
    pub fn with_header(columns: &[&str]) -> Self {
        let mut w = Self::default();
        w.row(columns.iter().copied());
        w
    }

    pub fn row<I, S>(&mut self, fields: I)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut first = true;
        for f in fields {
            let f = f.as_ref();
            debug_assert!(
                !f.contains(',') && !f.contains('\n'),
                "CSV field needs quoting: {f:?}"
            );
            if !first {
                self.buf.push(',');
            }
            self.buf.push_str(f);
            first = false;
        }
        self.buf.push('\n');
    }

    pub fn as_str(&self) -> &str {
        &self.buf
    }

    pub fn into_string(self) -> String {
        self.buf
    }
}

/// Splits CSV text into rows of fields (no quoting support; none is ever written).
pub fn parse_csv(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split(',').map(|f| f.trim().to_string()).collect())
        .collect()
}
