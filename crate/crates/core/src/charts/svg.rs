use std::fmt::Write as _;

pub(crate) const WIDTH: f64 = 860.0;
pub(crate) const HEIGHT: f64 = 500.0;
pub(crate) const LEFT: f64 = 70.0;
pub(crate) const RIGHT: f64 = 110.0;
pub(crate) const TOP: f64 = 45.0;
pub(crate) const BOTTOM: f64 = 70.0;

pub(crate) fn escape(text: &str) -> String {
    let mut out = String::with_capacity(text.len());
    for ch in text.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Linear map from a data interval onto a pixel interval.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Scale {
    d0: f64,
    d1: f64,
    r0: f64,
    r1: f64,
}

impl Scale {
    pub(crate) fn new(d0: f64, d1: f64, r0: f64, r1: f64) -> Self {
        let (d0, d1) = if d1 > d0 { (d0, d1) } else { (d0 - 0.5, d0 + 0.5) };
        Self { d0, d1, r0, r1 }
    }

    pub(crate) fn map(&self, v: f64) -> f64 {
        self.r0 + (v - self.d0) / (self.d1 - self.d0) * (self.r1 - self.r0)
    }

    pub(crate) fn domain(&self) -> (f64, f64) {
        (self.d0, self.d1)
    }
}

pub(crate) struct Svg {
    buf: String,
}

impl Svg {
    pub(crate) fn new(title: &str) -> Self {
        let mut buf = String::new();
        let _ = writeln!(buf, r##"<?xml version="1.0" encoding="UTF-8" standalone="no"?>"##);
        let _ = writeln!(
            buf,
            r##"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="Helvetica, Arial, sans-serif" font-size="12">"##
        );
        let _ = writeln!(buf, r##"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="#ffffff"/>"##);
        let _ = writeln!(
            buf,
            r##"<text class="title" x="{:.2}" y="26" text-anchor="middle" font-size="16">{}</text>"##,
            WIDTH / 2.0,
            escape(title)
        );
        Self { buf }
    }

    pub(crate) fn raw(&mut self, line: impl AsRef<str>) {
        self.buf.push_str(line.as_ref());
        self.buf.push('\n');
    }

    pub(crate) fn text(&mut self, x: f64, y: f64, anchor: &str, extra: &str, text: &str) {
        let _ = writeln!(
            self.buf,
            r##"<text x="{x:.2}" y="{y:.2}" text-anchor="{anchor}"{extra}>{}</text>"##,
            escape(text)
        );
    }

    /// Axis lines, ticks and axis titles for the plot area.
    pub(crate) fn axes(&mut self, x: Option<&Scale>, y: &Scale, x_label: &str, y_label: &str) {
        let (x0, x1) = (LEFT, WIDTH - RIGHT);
        let (y0, y1) = (HEIGHT - BOTTOM, TOP);
        self.raw(format!(
            r##"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x1:.2}" y2="{y0:.2}" stroke="#000000"/>"##
        ));
        self.raw(format!(
            r##"<line class="axis" x1="{x0:.2}" y1="{y0:.2}" x2="{x0:.2}" y2="{y1:.2}" stroke="#000000"/>"##
        ));
        for v in ticks(y.domain()) {
            let py = y.map(v);
            self.raw(format!(
                r##"<line class="tick" x1="{:.2}" y1="{py:.2}" x2="{x0:.2}" y2="{py:.2}" stroke="#000000"/>"##,
                x0 - 4.0
            ));
            self.text(x0 - 7.0, py + 4.0, "end", "", &format_tick(v));
        }
        if let Some(x) = x {
            for v in ticks(x.domain()) {
                let px = x.map(v);
                self.raw(format!(
                    r##"<line class="tick" x1="{px:.2}" y1="{y0:.2}" x2="{px:.2}" y2="{:.2}" stroke="#000000"/>"##,
                    y0 + 4.0
                ));
                self.text(px, y0 + 18.0, "middle", "", &format_tick(v));
            }
        }
        self.text((x0 + x1) / 2.0, HEIGHT - 12.0, "middle", "", x_label);
        let (cx, cy) = (18.0, (y0 + y1) / 2.0);
        self.text(
            cx,
            cy,
            "middle",
            &format!(r##" transform="rotate(-90 {cx:.2} {cy:.2})""##),
            y_label,
        );
    }

    pub(crate) fn legend(&mut self, entries: &[(String, String)]) {
        let x = WIDTH - RIGHT + 16.0;
        for (i, (label, color)) in entries.iter().enumerate() {
            let y = TOP + 10.0 + i as f64 * 20.0;
            self.raw(format!(
                r##"<rect class="legend" x="{x:.2}" y="{:.2}" width="12" height="12" fill="{color}"/>"##,
                y - 10.0
            ));
            self.text(x + 18.0, y, "start", "", label);
        }
    }

    pub(crate) fn finish(mut self) -> String {
        self.buf.push_str("</svg>\n");
        self.buf
    }
}

/// About five round tick positions covering `[lo, hi]`.
pub(crate) fn ticks((lo, hi): (f64, f64)) -> Vec<f64> {
    let span = hi - lo;
    if !(span > 0.0) || !span.is_finite() {
        return vec![lo];
    }
    let raw = span / 5.0;
    let mag = 10f64.powf(raw.log10().floor());
    let step = [1.0, 2.0, 5.0, 10.0]
        .iter()
        .map(|m| m * mag)
        .find(|s| span / s <= 6.0)
        .unwrap_or(10.0 * mag);
    let start = (lo / step).ceil() as i64;
    let end = (hi / step).floor() as i64;
    (start..=end).map(|i| i as f64 * step).collect()
}

fn format_tick(v: f64) -> String {
    if v.fract().abs() < 1e-9 {
        format!("{}", v.round() as i64)
    } else {
        let s = format!("{v:.3}");
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    }
}
