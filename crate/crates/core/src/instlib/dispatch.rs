//! Operator instances and the rules choosing the kernels that run them.

use serde::{Deserialize, Serialize};

use super::LibError;
use crate::expr::ParamEnv;

/// Operator types the library can price.
pub const OP_TYPES: [&str; 10] = [
    "Conv2D",
    "DepthConv2D",
    "FullyConnected",
    "MaxPool2D",
    "AvgPool2D",
    "ReLU",
    "Add",
    "Mul",
    "Softmax",
    "Reshape",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorInstance {
    pub op_type: String,
    pub params: ParamEnv,
}

impl OperatorInstance {
    pub fn new(op_type: impl Into<String>, params: ParamEnv) -> OperatorInstance {
        OperatorInstance {
            op_type: op_type.into(),
            params,
        }
    }
}

/// Condition over operator parameters. An unbound parameter never equals
/// anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Predicate {
    Always,
    Eq { param: String, value: u64 },
    All(Vec<Predicate>),
    Any(Vec<Predicate>),
    Not(Box<Predicate>),
}

impl Predicate {
    pub fn eq(param: &str, value: u64) -> Predicate {
        Predicate::Eq {
            param: param.to_string(),
            value,
        }
    }

    pub fn holds(&self, params: &ParamEnv) -> bool {
        match self {
            Predicate::Always => true,
            Predicate::Eq { param, value } => params.get(param) == Some(*value),
            Predicate::All(ps) => ps.iter().all(|p| p.holds(params)),
            Predicate::Any(ps) => ps.iter().any(|p| p.holds(params)),
            Predicate::Not(p) => !p.holds(params),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DispatchRule {
    pub op_type: String,
    #[serde(default = "always")]
    pub when: Predicate,
    pub kernels: Vec<String>,
}

fn always() -> Predicate {
    Predicate::Always
}

fn rule(op_type: &str, when: Predicate, kernel: &str) -> DispatchRule {
    DispatchRule {
        op_type: op_type.to_string(),
        when,
        kernels: vec![kernel.to_string()],
    }
}

/// CMSIS-NN style kernel selection: three convolution kernels chosen by
/// filter shape, a 3x3 depthwise fast path, and one kernel per other type.
pub fn default_rules() -> Vec<DispatchRule> {
    let one_by_one = Predicate::All(vec![Predicate::eq("kh", 1), Predicate::eq("kw", 1)]);
    let one_by_n = Predicate::All(vec![
        Predicate::Any(vec![Predicate::eq("kh", 1), Predicate::eq("kw", 1)]),
        Predicate::Not(Box::new(one_by_one.clone())),
    ]);
    vec![
        rule("Conv2D", one_by_one, "arm_convolve_1x1_s8_fast"),
        rule("Conv2D", one_by_n, "arm_convolve_1_x_n_s8"),
        rule("Conv2D", Predicate::Always, "arm_convolve_s8"),
        rule(
            "DepthConv2D",
            Predicate::All(vec![Predicate::eq("kh", 3), Predicate::eq("kw", 3)]),
            "arm_depthwise_conv_3x3",
        ),
        rule("DepthConv2D", Predicate::Always, "arm_depthwise_conv_s8"),
        rule(
            "FullyConnected",
            Predicate::Always,
            "arm_fully_connected_s8",
        ),
        rule("MaxPool2D", Predicate::Always, "arm_max_pool_s8"),
        rule("AvgPool2D", Predicate::Always, "arm_avgpool_s8"),
        rule("ReLU", Predicate::Always, "arm_relu_s8"),
        rule("Add", Predicate::Always, "arm_elementwise_add_s8"),
        rule("Mul", Predicate::Always, "arm_elementwise_mul_s8"),
        rule("Softmax", Predicate::Always, "arm_softmax_s8"),
        rule("Reshape", Predicate::Always, "reshape_copy"),
    ]
}

/// Kernels of the first rule matching `op`.
pub fn dispatch_operator<'r>(
    op: &OperatorInstance,
    rules: &'r [DispatchRule],
) -> Result<&'r [String], LibError> {
    rules
        .iter()
        .find(|r| r.op_type == op.op_type && r.when.holds(&op.params))
        .map(|r| r.kernels.as_slice())
        .ok_or_else(|| LibError::NoRule(op.op_type.clone()))
}
