use crate::exec::Exec;
use crate::lp::{LpOptions, PivotRule};

/// Numeric and execution settings shared by every computation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Settings {
    /// Acceptability and LP tolerance.
    pub tol: f64,
    /// Solve LPs over exact rationals.
    pub exact: bool,
    pub pivot: PivotRule,
    pub exec: Exec,
}

impl Default for Settings {
    fn default() -> Self {
        Self {
            tol: 1e-9,
            exact: false,
            pivot: PivotRule::Bland,
            exec: Exec::default(),
        }
    }
}

impl Settings {
    pub fn lp(&self) -> LpOptions {
        LpOptions {
            tol: self.tol,
            exact: self.exact,
            pivot: self.pivot,
        }
    }

    pub fn sequential(self) -> Self {
        Self {
            exec: Exec::Sequential,
            ..self
        }
    }
}
