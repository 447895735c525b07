//! Standalone SVG for the boundary validation buckets.

use pamg_core::boundary::BoundaryReport;

const W: f64 = 560.0;
const H: f64 = 320.0;
const PAD: f64 = 48.0;

fn label(lo: f64, hi: f64) -> String {
    if hi.is_infinite() {
        format!("&gt;{lo}")
    } else {
        format!("({lo},{hi}]")
    }
}

/// Success-rate bars with a mean-IoU polyline, one group per rho bucket.
pub fn boundary_svg(r: &BoundaryReport) -> String {
    let n = r.buckets.len().max(1) as f64;
    let plot_w = W - 2.0 * PAD;
    let plot_h = H - 2.0 * PAD;
    let slot = plot_w / n;
    let y = |v: f64| PAD + plot_h * (1.0 - v);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    );
    s.push_str(&format!("<rect width=\"{W}\" height=\"{H}\" fill=\"white\"/>\n"));
    for t in [0.0, 0.25, 0.5, 0.75, 1.0] {
        let gy = y(t);
        s.push_str(&format!(
            "<line class=\"grid\" x1=\"{PAD}\" x2=\"{}\" y1=\"{gy:.1}\" y2=\"{gy:.1}\" stroke=\"#ddd\"/><text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">{t}</text>\n",
            W - PAD,
            PAD - 6.0,
            gy + 4.0
        ));
    }
    let mut points = Vec::new();
    for (i, b) in r.buckets.iter().enumerate() {
        let x0 = PAD + slot * i as f64;
        let cx = x0 + slot / 2.0;
        if let Some(rate) = b.success_rate {
            s.push_str(&format!(
                "<rect class=\"success\" x=\"{:.1}\" y=\"{:.1}\" width=\"{:.1}\" height=\"{:.1}\" fill=\"#4a7bb7\"><title>success {rate:.3} (n={})</title></rect>\n",
                x0 + slot * 0.2,
                y(rate),
                slot * 0.6,
                plot_h * rate,
                b.count
            ));
        }
        if let Some(m) = b.mean_iou {
            points.push(format!("{cx:.1},{:.1}", y(m)));
            s.push_str(&format!(
                "<circle class=\"mean-iou\" cx=\"{cx:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"#d1495b\"/>\n",
                y(m)
            ));
        }
        s.push_str(&format!(
            "<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{}</text>\n<text x=\"{cx:.1}\" y=\"{:.1}\" text-anchor=\"middle\" fill=\"#666\">n={}</text>\n",
            H - PAD + 16.0,
            label(b.lo, b.hi),
            H - PAD + 30.0,
            b.count
        ));
    }
    if points.len() > 1 {
        s.push_str(&format!(
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#d1495b\" stroke-width=\"2\"/>\n",
            points.join(" ")
        ));
    }
    s.push_str(&format!(
        "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">rho = SCR / B</text>\n<text x=\"{PAD}\" y=\"{}\">bars: success rate (IoU &gt; 0.5), line: mean IoU</text>\n</svg>\n",
        W / 2.0,
        H - 6.0,
        PAD - 16.0
    ));
    s
}
