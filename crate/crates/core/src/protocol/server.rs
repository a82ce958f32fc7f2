use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};

use serde_json::{Map, Value};

use super::message::{decode_message, encode_message, experiment_reply, Action, ConfigReply, Message};
use super::ProtocolError;

/// The experiment side of the protocol. Callbacks run sequentially.
pub trait ExperimentHandler {
    fn on_config(&mut self) -> ConfigReply;

    /// Fitness tuple per expression, in request order. An `Err` entry is
    /// answered with a tuple of `+inf`.
    fn on_experiment(&mut self, expressions: &[String]) -> Vec<Result<Vec<f64>, String>>;

    fn objective_count(&self) -> usize;

    /// Called once after the SHUTDOWN reply has been sent.
    fn on_shutdown(&mut self) {}
}

/// How a served connection ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServeEnd {
    Shutdown,
    /// The client closed the connection without SHUTDOWN.
    Disconnected,
}

/// Accepts connections one at a time until a client sends SHUTDOWN.
pub fn serve(listener: &TcpListener, handler: &mut dyn ExperimentHandler) -> Result<(), ProtocolError> {
    loop {
        let (stream, peer) = listener.accept()?;
        log::info!("client connected from {peer}");
        match serve_connection(stream, handler)? {
            ServeEnd::Shutdown => {
                handler.on_shutdown();
                return Ok(());
            }
            ServeEnd::Disconnected => log::info!("client {peer} disconnected"),
        }
    }
}

/// Serves one connection with strict request-reply alternation.
pub fn serve_connection(
    stream: TcpStream,
    handler: &mut dyn ExperimentHandler,
) -> Result<ServeEnd, ProtocolError> {
    let mut writer = stream.try_clone()?;
    let mut reader = BufReader::new(stream);
    let mut frame = Vec::new();
    loop {
        frame.clear();
        if reader.read_until(b'\n', &mut frame)? == 0 {
            return Ok(ServeEnd::Disconnected);
        }
        let reply = match decode_message(&frame) {
            Ok(request) => dispatch(request, handler),
            Err(e) => {
                log::warn!("bad request: {e}");
                Message::error(e.to_string())
            }
        };
        let shutdown = reply.action == Action::Shutdown;
        writer.write_all(&encode_message(&reply))?;
        writer.flush()?;
        if shutdown {
            let _ = writer.shutdown(std::net::Shutdown::Both);
            return Ok(ServeEnd::Shutdown);
        }
    }
}

fn dispatch(request: Message, handler: &mut dyn ExperimentHandler) -> Message {
    match request.action {
        Action::Config => Message::new(Action::Config, handler.on_config().to_value()),
        Action::Experiment => {
            let Some(items) = request.payload.as_array() else {
                return Message::error("EXPERIMENT payload must be a list of strings");
            };
            let mut expressions = Vec::with_capacity(items.len());
            for item in items {
                match item.as_str() {
                    Some(s) => expressions.push(s.to_string()),
                    None => return Message::error(format!("expression {item} is not a string")),
                }
            }
            let m = handler.objective_count();
            let mut results = handler.on_experiment(&expressions);
            if results.len() != expressions.len() {
                log::error!(
                    "handler returned {} results for {} expressions",
                    results.len(),
                    expressions.len()
                );
                results.resize_with(expressions.len(), || Err("no result".into()));
            }
            let tuples: Vec<Vec<f64>> = results
                .into_iter()
                .zip(&expressions)
                .map(|(r, e)| match r {
                    Ok(t) if t.len() == m => t,
                    Ok(t) => {
                        log::warn!("`{e}`: {} values, expected {m}", t.len());
                        vec![f64::INFINITY; m]
                    }
                    Err(msg) => {
                        log::warn!("`{e}`: {msg}");
                        vec![f64::INFINITY; m]
                    }
                })
                .collect();
            Message::new(Action::Experiment, experiment_reply(&tuples))
        }
        Action::Shutdown => Message::new(Action::Shutdown, Value::Object(Map::new())),
        Action::Error => Message::error("ERROR is not a request"),
    }
}
