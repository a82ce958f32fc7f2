use std::fmt;
use std::str::FromStr;

use serde_json::{json, Map, Value};

use super::ProtocolError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Action {
    Config,
    Experiment,
    Shutdown,
    /// Error reply from a server. Not part of the request vocabulary.
    Error,
}

impl Action {
    pub fn as_str(self) -> &'static str {
        match self {
            Action::Config => "CONFIG",
            Action::Experiment => "EXPERIMENT",
            Action::Shutdown => "SHUTDOWN",
            Action::Error => "ERROR",
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Action {
    type Err = ProtocolError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CONFIG" => Ok(Action::Config),
            "EXPERIMENT" => Ok(Action::Experiment),
            "SHUTDOWN" => Ok(Action::Shutdown),
            "ERROR" => Ok(Action::Error),
            other => Err(ProtocolError::UnknownAction(other.to_string())),
        }
    }
}

/// One protocol frame: `{"action": ..., "payload": ...}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub action: Action,
    pub payload: Value,
}

impl Message {
    pub fn new(action: Action, payload: Value) -> Self {
        Self { action, payload }
    }

    pub fn config() -> Self {
        Self::new(Action::Config, Value::Null)
    }

    pub fn experiment<S: AsRef<str>>(expressions: &[S]) -> Self {
        let list = expressions.iter().map(|e| Value::from(e.as_ref())).collect();
        Self::new(Action::Experiment, Value::Array(list))
    }

    pub fn shutdown() -> Self {
        Self::new(Action::Shutdown, Value::Null)
    }

    pub fn error(diagnostic: impl Into<String>) -> Self {
        Self::new(Action::Error, Value::String(diagnostic.into()))
    }
}

/// Serializes `m` as a single JSON object followed by one `\n`.
pub fn encode_message(m: &Message) -> Vec<u8> {
    let mut object = Map::new();
    object.insert("action".into(), Value::from(m.action.as_str()));
    object.insert("payload".into(), m.payload.clone());
    // Compact JSON escapes every newline inside strings, so the only raw
    // 0x0A in the frame is the terminator.
    let mut bytes = serde_json::to_vec(&Value::Object(object)).expect("JSON values always serialize");
    bytes.push(b'\n');
    bytes
}

/// Parses exactly one frame, trailing newline included.
pub fn decode_message(frame: &[u8]) -> Result<Message, ProtocolError> {
    let Some(body) = frame.strip_suffix(b"\n") else {
        return Err(ProtocolError::IncompleteFrame);
    };
    if body.contains(&b'\n') {
        return Err(ProtocolError::Malformed("more than one frame".into()));
    }
    let value: Value =
        serde_json::from_slice(body).map_err(|e| ProtocolError::Malformed(e.to_string()))?;
    let Value::Object(mut object) = value else {
        return Err(ProtocolError::Malformed("frame is not a JSON object".into()));
    };
    let action = match object.remove("action") {
        Some(Value::String(s)) => s.parse::<Action>()?,
        Some(other) => {
            return Err(ProtocolError::Malformed(format!("`action` must be a string, got {other}")))
        }
        None => return Err(ProtocolError::Malformed("missing member `action`".into())),
    };
    let Some(payload) = object.remove("payload") else {
        return Err(ProtocolError::Malformed("missing member `payload`".into()));
    };
    if let Some(extra) = object.keys().next() {
        return Err(ProtocolError::Malformed(format!("unexpected member `{extra}`")));
    }
    Ok(Message { action, payload })
}

/// Server answer to CONFIG.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ConfigReply {
    /// Name to arity, in declaration order. Arity 0 marks a terminal.
    pub primitives: Vec<(String, usize)>,
    /// Terminals that are symbolic constants rather than arguments.
    pub constants: Vec<String>,
    /// Engine settings suggested by the server.
    pub options: Map<String, Value>,
}

impl ConfigReply {
    pub fn to_value(&self) -> Value {
        let primitives: Map<String, Value> = self
            .primitives
            .iter()
            .map(|(n, a)| (n.clone(), Value::from(*a)))
            .collect();
        let mut v = json!({ "primitives": primitives, "constants": self.constants });
        if !self.options.is_empty() {
            v["options"] = Value::Object(self.options.clone());
        }
        v
    }

    pub fn from_value(v: &Value) -> Result<Self, ProtocolError> {
        let bad = |m: &str| ProtocolError::BadReply(format!("CONFIG reply: {m}"));
        let object = v.as_object().ok_or_else(|| bad("payload is not an object"))?;
        let prims = object
            .get("primitives")
            .and_then(Value::as_object)
            .ok_or_else(|| bad("missing `primitives` object"))?;
        let mut primitives = Vec::with_capacity(prims.len());
        for (name, arity) in prims {
            let arity = arity
                .as_u64()
                .ok_or_else(|| bad(&format!("arity of `{name}` is not a non-negative integer")))?;
            primitives.push((name.clone(), arity as usize));
        }
        let constants = match object.get("constants") {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(items)) => items
                .iter()
                .map(|c| c.as_str().map(str::to_string).ok_or_else(|| bad("constant names must be strings")))
                .collect::<Result<_, _>>()?,
            Some(_) => return Err(bad("`constants` must be a list")),
        };
        for c in &constants {
            if !primitives.iter().any(|(n, a)| n == c && *a == 0) {
                return Err(bad(&format!("constant `{c}` is not an arity-0 primitive")));
            }
        }
        let options = match object.get("options") {
            None | Some(Value::Null) => Map::new(),
            Some(Value::Object(o)) => o.clone(),
            Some(_) => return Err(bad("`options` must be an object")),
        };
        Ok(Self {
            primitives,
            constants,
            options,
        })
    }

    /// Splits the table into `(functions, arguments, constants)` in
    /// declaration order.
    pub fn split(&self) -> (Vec<(String, usize)>, Vec<String>, Vec<String>) {
        let mut functions = Vec::new();
        let mut arguments = Vec::new();
        for (name, arity) in &self.primitives {
            if *arity > 0 {
                functions.push((name.clone(), *arity));
            } else if !self.constants.contains(name) {
                arguments.push(name.clone());
            }
        }
        (functions, arguments, self.constants.clone())
    }
}

/// Encodes a fitness tuple; non-finite values become `null`.
pub fn fitness_to_value(values: &[f64]) -> Value {
    Value::Array(
        values
            .iter()
            .map(|v| if v.is_finite() { Value::from(*v) } else { Value::Null })
            .collect(),
    )
}

/// Builds the EXPERIMENT reply payload `{"fitness": [...]}`.
pub fn experiment_reply(tuples: &[Vec<f64>]) -> Value {
    json!({ "fitness": tuples.iter().map(|t| fitness_to_value(t)).collect::<Vec<_>>() })
}

/// Parses an EXPERIMENT reply payload. `null` and the strings `inf`,
/// `Infinity` and `NaN` decode to `+inf`.
pub fn parse_experiment_reply(payload: &Value) -> Result<Vec<Vec<f64>>, ProtocolError> {
    let bad = |m: String| ProtocolError::BadReply(format!("EXPERIMENT reply: {m}"));
    let list = payload
        .get("fitness")
        .and_then(Value::as_array)
        .ok_or_else(|| bad("missing `fitness` list".into()))?;
    list.iter()
        .enumerate()
        .map(|(i, tuple)| {
            let items = match tuple {
                Value::Array(items) => items.as_slice(),
                // A bare number is a 1-tuple.
                Value::Number(_) | Value::Null => std::slice::from_ref(tuple),
                _ => return Err(bad(format!("entry {i} is not a list"))),
            };
            items
                .iter()
                .map(|v| match v {
                    Value::Number(n) => n.as_f64().ok_or_else(|| bad(format!("entry {i}: bad number"))),
                    Value::Null => Ok(f64::INFINITY),
                    Value::String(s) if matches!(s.as_str(), "inf" | "Infinity" | "NaN") => {
                        Ok(f64::INFINITY)
                    }
                    other => Err(bad(format!("entry {i}: unexpected value {other}"))),
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn shutdown_round_trips() {
        let frame = br#"{"action":"SHUTDOWN","payload":null}"#.to_vec();
        let mut framed = frame.clone();
        framed.push(b'\n');
        let m = decode_message(&framed).unwrap();
        assert_eq!(m, Message::shutdown());
        assert_eq!(encode_message(&m), framed);
    }

    #[test]
    fn placeholder_action_is_unknown() {
        let err = decode_message(b"{\"action\":\"value\",\"payload\":\"value\"}\n").unwrap_err();
        assert!(matches!(err, ProtocolError::UnknownAction(ref a) if a == "value"), "{err}");
    }

    #[test]
    fn framing_and_envelope_errors() {
        assert!(matches!(
            decode_message(br#"{"action":"CONFIG","payload":null}"#),
            Err(ProtocolError::IncompleteFrame)
        ));
        for bad in [
            "{\"action\":\"CONFIG\"}\n",
            "{\"payload\":1}\n",
            "{\"action\":\"CONFIG\",\"payload\":null,\"x\":1}\n",
            "[1,2]\n",
            "{not json\n",
            "{\"action\":3,\"payload\":null}\n",
            "{\"action\":\"CONFIG\",\n\"payload\":null}\n",
        ] {
            assert!(
                matches!(decode_message(bad.as_bytes()), Err(ProtocolError::Malformed(_))),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn encoded_strings_keep_newlines_escaped() {
        let m = Message::error("line one\nline two");
        let bytes = encode_message(&m);
        assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
        assert_eq!(decode_message(&bytes).unwrap(), m);
    }

    #[test]
    fn config_reply_schema() {
        let reply = ConfigReply {
            primitives: vec![("Add".into(), 2), ("Neg".into(), 1), ("x".into(), 0), ("k".into(), 0)],
            constants: vec!["k".into()],
            options: Map::new(),
        };
        let v = reply.to_value();
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"primitives":{"Add":2,"Neg":1,"x":0,"k":0},"constants":["k"]}"#
        );
        assert_eq!(ConfigReply::from_value(&v).unwrap(), reply);
        let (f, a, c) = reply.split();
        assert_eq!(f, vec![("Add".to_string(), 2), ("Neg".to_string(), 1)]);
        assert_eq!(a, vec!["x"]);
        assert_eq!(c, vec!["k"]);

        let bad = json!({"primitives": {"Add": 2}, "constants": ["Add"]});
        assert!(ConfigReply::from_value(&bad).is_err());
    }

    #[test]
    fn fitness_non_finite_as_null() {
        let v = experiment_reply(&[vec![1.5, f64::INFINITY], vec![f64::NAN, 0.0]]);
        assert_eq!(
            serde_json::to_string(&v).unwrap(),
            r#"{"fitness":[[1.5,null],[null,0.0]]}"#
        );
        let back = parse_experiment_reply(&v).unwrap();
        assert_eq!(back, vec![vec![1.5, f64::INFINITY], vec![f64::INFINITY, 0.0]]);
        let s = json!({"fitness": [["inf", 2], 3]});
        assert_eq!(
            parse_experiment_reply(&s).unwrap(),
            vec![vec![f64::INFINITY, 2.0], vec![3.0]]
        );
    }

    fn arb_json() -> impl Strategy<Value = Value> {
        let leaf = prop_oneof![
            Just(Value::Null),
            any::<bool>().prop_map(Value::Bool),
            any::<i64>().prop_map(Value::from),
            any::<f64>()
                .prop_filter("finite", |v| v.is_finite())
                .prop_map(Value::from),
            ".*".prop_map(Value::String),
        ];
        leaf.prop_recursive(4, 48, 6, |inner| {
            prop_oneof![
                proptest::collection::vec(inner.clone(), 0..6).prop_map(Value::Array),
                proptest::collection::btree_map(".*", inner, 0..6)
                    .prop_map(|m| Value::Object(m.into_iter().collect())),
            ]
        })
    }

    fn arb_action() -> impl Strategy<Value = Action> {
        prop_oneof![
            Just(Action::Config),
            Just(Action::Experiment),
            Just(Action::Shutdown),
            Just(Action::Error),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(1000))]

        #[test]
        fn decode_inverts_encode(action in arb_action(), payload in arb_json()) {
            let m = Message::new(action, payload);
            let bytes = encode_message(&m);
            prop_assert_eq!(bytes.iter().filter(|&&b| b == b'\n').count(), 1);
            prop_assert_eq!(decode_message(&bytes).unwrap(), m);
        }
    }
}
