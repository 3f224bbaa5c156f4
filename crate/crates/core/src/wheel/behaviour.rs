//! Wheel movements as composable output shapers.
//!
//! [`Advance`] passes the control output through; the other behaviours wrap
//! an inner behaviour and modify what it produces.

pub trait Behaviour: Send {
    fn shape(&mut self, volts: f64) -> f64;
    fn describe(&self) -> String;
    fn reset(&mut self) {}
}

impl<B: Behaviour + ?Sized> Behaviour for Box<B> {
    fn shape(&mut self, volts: f64) -> f64 {
        (**self).shape(volts)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

impl<B: Behaviour + ?Sized> Behaviour for &mut B {
    fn shape(&mut self, volts: f64) -> f64 {
        (**self).shape(volts)
    }
    fn describe(&self) -> String {
        (**self).describe()
    }
    fn reset(&mut self) {
        (**self).reset()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Advance;

impl Behaviour for Advance {
    fn shape(&mut self, volts: f64) -> f64 {
        volts
    }
    fn describe(&self) -> String {
        "advance".into()
    }
}

/// Negates the inner output.
#[derive(Debug, Clone, Copy)]
pub struct Reverse<B>(pub B);

impl<B: Behaviour> Behaviour for Reverse<B> {
    fn shape(&mut self, volts: f64) -> f64 {
        -self.0.shape(volts)
    }
    fn describe(&self) -> String {
        format!("reverse({})", self.0.describe())
    }
    fn reset(&mut self) {
        self.0.reset()
    }
}

/// Forces 0 V whatever the inner behaviour produces.
#[derive(Debug, Clone, Copy)]
pub struct Stop<B>(pub B);

impl<B: Behaviour> Behaviour for Stop<B> {
    fn shape(&mut self, volts: f64) -> f64 {
        // The inner behaviour still runs so stateful shapers stay in step.
        let _ = self.0.shape(volts);
        0.0
    }
    fn describe(&self) -> String {
        format!("stop({})", self.0.describe())
    }
    fn reset(&mut self) {
        self.0.reset()
    }
}

/// Ramps toward 0 V by at most `ramp` volts per call, starting from the
/// first inner output it sees.
#[derive(Debug, Clone, Copy)]
pub struct SoftStop<B> {
    inner: B,
    ramp: f64,
    level: Option<f64>,
}

impl<B: Behaviour> SoftStop<B> {
    pub fn new(inner: B, ramp: f64) -> Self {
        assert!(ramp > 0.0, "ramp must be positive");
        Self {
            inner,
            ramp,
            level: None,
        }
    }
}

impl<B: Behaviour> Behaviour for SoftStop<B> {
    fn shape(&mut self, volts: f64) -> f64 {
        let inner = self.inner.shape(volts);
        let next = match self.level {
            None => inner,
            Some(l) => l - l.clamp(-self.ramp, self.ramp),
        };
        self.level = Some(next);
        next
    }
    fn describe(&self) -> String {
        format!("soft_stop({})", self.inner.describe())
    }
    fn reset(&mut self) {
        self.level = None;
        self.inner.reset()
    }
}
