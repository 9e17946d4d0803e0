//! Gnuplot scripts over the campaign CSV tables.

use serde::{Deserialize, Serialize};

use crate::state::Kind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Figure {
    Fig1a,
    Fig1b,
    Fig2,
    Fig3,
    Fig4,
}

impl Figure {
    pub fn name(self) -> &'static str {
        match self {
            Figure::Fig1a => "fig1a",
            Figure::Fig1b => "fig1b",
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
            Figure::Fig4 => "fig4",
        }
    }
}

const PREAMBLE: &str = "set datafile separator ','\nset key outside right\nset grid\n";

fn kind_plot(file: &str, kinds: &[Kind], with_errors: bool) -> String {
    let curves: Vec<String> = kinds
        .iter()
        .map(|k| {
            let sel = format!("(strcol(3) eq '{k}' ? $4 : 1/0)");
            if with_errors {
                format!("'{file}' skip 1 using 1:{sel}:5 with yerrorbars title '{k}'")
            } else {
                format!("'{file}' skip 1 using 1:{sel} with lines title '{k}'")
            }
        })
        .collect();
    format!("plot {}\n", curves.join(", \\\n     "))
}

/// Returns the script file name and its body.
pub fn script(fig: Figure, files: &[String], kinds: &[Kind]) -> (String, String) {
    let has = |f: &str| files.iter().any(|x| x == f);
    let mut s = String::from(PREAMBLE);
    s.push_str(&format!("set terminal pngcairo size 900,600\nset output '{}.png'\n", fig.name()));
    match fig {
        Figure::Fig1a => {
            s.push_str("set xlabel 'x'\nset ylabel 'z'\nset size ratio -1\n");
            s.push_str("set parametric\nset trange [0:2*pi]\n");
            s.push_str("plot cos(t), sin(t) with lines dt 2 lc 'gray' title 'unit circle', \\\n");
            s.push_str("     'means.csv' skip 1 using 2:4 with linespoints title 'sub-ensemble mean'\n");
        }
        Figure::Fig1b => {
            s.push_str("set xlabel 't_1 / tau_m'\nset ylabel 'correlator'\n");
            s.push_str(&kind_plot("correlators.csv", kinds, !has("analytic.csv")));
            if has("analytic.csv") {
                s.push_str("replot ");
                s.push_str(&kind_plot("analytic.csv", kinds, false)[5..]);
            }
        }
        Figure::Fig2 | Figure::Fig4 => {
            s.push_str("set multiplot layout 1,2\n");
            s.push_str("set xlabel 't_1'\nset ylabel 'covariance'\n");
            s.push_str(&kind_plot("correlators.csv", kinds, true));
            s.push_str("set xlabel 't'\nset ylabel 'variance'\n");
            s.push_str("plot 'variances.csv' skip 1 using 1:2:3 with yerrorbars title 'x', \\\n");
            s.push_str("     'variances.csv' skip 1 using 1:4:5 with yerrorbars title 'z'\n");
            s.push_str("unset multiplot\n");
        }
        Figure::Fig3 => {
            s.push_str("set xlabel 'theta'\nset ylabel 't'\nset zlabel 'density'\n");
            s.push_str("set xrange [0:2*pi]\nset hidden3d\n");
            s.push_str("splot 'densities.csv' skip 1 using 2:1:3 with points pt 7 ps 0.3 title 'P(theta, t)'\n");
        }
    }
    (format!("{}.gp", fig.name()), s)
}
