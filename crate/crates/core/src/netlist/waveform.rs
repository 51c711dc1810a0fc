use std::f64::consts::PI;

/// Stimulus shape of an independent source.
#[derive(Debug, Clone, PartialEq)]
pub enum Waveform {
    Dc(f64),
    /// Linear ramp from `initial` to `fin` starting at `t_start` and lasting
    /// `edge` seconds.
    Step {
        initial: f64,
        fin: f64,
        t_start: f64,
        edge: f64,
    },
    Sine {
        offset: f64,
        amplitude: f64,
        freq: f64,
    },
    /// Piecewise-linear `(t, value)` knots; held constant outside the knots.
    Pwl(Vec<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WaveformError {
    #[error("step edge must be >= 0, got {0}")]
    NegativeEdge(f64),
    #[error("pwl times must be strictly increasing (knot {0})")]
    PwlOrder(usize),
    #[error("pwl needs at least one knot")]
    PwlEmpty,
    #[error("sine frequency must be > 0, got {0}")]
    SineFreq(f64),
    #[error("non-finite waveform value")]
    NonFinite,
}

impl Waveform {
    pub fn step(initial: f64, fin: f64, t_start: f64, edge: f64) -> Result<Self, WaveformError> {
        let w = Waveform::Step { initial, fin, t_start, edge };
        w.validate()?;
        Ok(w)
    }

    pub fn pwl(points: Vec<(f64, f64)>) -> Result<Self, WaveformError> {
        let w = Waveform::Pwl(points);
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<(), WaveformError> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match self {
            Waveform::Dc(v) => {
                if !v.is_finite() {
                    return Err(WaveformError::NonFinite);
                }
            }
            Waveform::Step { initial, fin, t_start, edge } => {
                if !finite(&[*initial, *fin, *t_start, *edge]) {
                    return Err(WaveformError::NonFinite);
                }
                if *edge < 0.0 {
                    return Err(WaveformError::NegativeEdge(*edge));
                }
            }
            Waveform::Sine { offset, amplitude, freq } => {
                if !finite(&[*offset, *amplitude, *freq]) {
                    return Err(WaveformError::NonFinite);
                }
                if *freq <= 0.0 {
                    return Err(WaveformError::SineFreq(*freq));
                }
            }
            Waveform::Pwl(points) => {
                if points.is_empty() {
                    return Err(WaveformError::PwlEmpty);
                }
                for (i, (t, v)) in points.iter().enumerate() {
                    if !t.is_finite() || !v.is_finite() {
                        return Err(WaveformError::NonFinite);
                    }
                    if i > 0 && *t <= points[i - 1].0 {
                        return Err(WaveformError::PwlOrder(i));
                    }
                }
            }
        }
        Ok(())
    }

    /// Value at time `t`. DC analyses evaluate at `t = 0`.
    pub fn value_at(&self, t: f64) -> f64 {
        match self {
            Waveform::Dc(v) => *v,
            Waveform::Step { initial, fin, t_start, edge } => {
                if t <= *t_start {
                    *initial
                } else if *edge <= 0.0 || t >= t_start + edge {
                    *fin
                } else {
                    initial + (fin - initial) * (t - t_start) / edge
                }
            }
            Waveform::Sine { offset, amplitude, freq } => offset + amplitude * (2.0 * PI * freq * t).sin(),
            Waveform::Pwl(points) => {
                let first = points[0];
                if t <= first.0 {
                    return first.1;
                }
                for w in points.windows(2) {
                    let (t0, v0) = w[0];
                    let (t1, v1) = w[1];
                    if t <= t1 {
                        return v0 + (v1 - v0) * (t - t0) / (t1 - t0);
                    }
                }
                points[points.len() - 1].1
            }
        }
    }

    pub fn dc_value(&self) -> f64 {
        self.value_at(0.0)
    }

    /// Times where the waveform's slope changes, which transient analysis
    /// must land on exactly.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            Waveform::Dc(_) | Waveform::Sine { .. } => Vec::new(),
            Waveform::Step { t_start, edge, .. } => {
                if *edge > 0.0 {
                    vec![*t_start, t_start + edge]
                } else {
                    vec![*t_start]
                }
            }
            Waveform::Pwl(points) => points.iter().map(|p| p.0).collect(),
        }
    }
}
