use std::fmt::Write;

use qrdesign::basis::{knot_preset, KNOT_PRESETS};
use qrdesign::SigmaShape;

use crate::config::Task;

/// Text of `qrdesign presets`. The order is fixed so the output can be
/// diffed across runs.
pub fn listing() -> String {
    let mut s = String::from("variance presets (sigma):\n");
    for shape in SigmaShape::ALL {
        let tag = if SigmaShape::SYMMETRIC.contains(&shape) { "symmetric" } else { "x >= 0" };
        writeln!(s, "  {:<16}{:<14}{tag}", shape.name(), shape.formula()).unwrap();
    }
    s.push_str("knot presets (basis.preset):\n");
    for name in KNOT_PRESETS {
        let (knots, (lo, hi)) = knot_preset(name).expect("listed preset exists");
        let knots: Vec<String> = knots.iter().map(|k| k.to_string()).collect();
        writeln!(s, "  {name:<16}[{lo}, {hi}] internal {}", knots.join(", ")).unwrap();
    }
    s.push_str("basis kinds (basis.kind):\n");
    s.push_str("  polynomial      {\"kind\": \"polynomial\", \"degree\": d}\n");
    s.push_str("  spline          {\"kind\": \"spline\", \"preset\": name}\n");
    s.push_str("                  {\"kind\": \"spline\", \"lo\": a, \"hi\": b, \"internal\": [..]}\n");
    s.push_str("space kinds (space.kind):\n");
    s.push_str("  grid            {\"kind\": \"grid\", \"lo\": a, \"hi\": b, \"size\": N}\n");
    s.push_str("  points          {\"kind\": \"points\", \"points\": [..]}\n");
    s.push_str("  continuous      {\"kind\": \"continuous\", \"lo\": a, \"hi\": b, \"nodes\": 2001}\n");
    s.push_str("tasks (task):\n ");
    for t in Task::ALL {
        write!(s, " {t}").unwrap();
    }
    s.push('\n');
    s
}
