//! Client and server talking over real sockets, including misbehaving peers.

use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream};
use std::thread::{self, JoinHandle};
use std::time::Duration;

use serde_json::{json, Value};
use symreg_core::lorenz::{lorenz_server, SimSetup};
use symreg_core::protocol::{Action, ClientTimeouts, Connection, ProtocolError};

/// A one-connection server that answers each request line with `reply`.
/// `None` closes the connection instead.
fn fake_server<F>(reply: F) -> (String, JoinHandle<()>)
where
    F: Fn(&Value) -> Option<String> + Send + 'static,
{
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    let handle = thread::spawn(move || {
        let (stream, _) = listener.accept().unwrap();
        let mut writer = stream.try_clone().unwrap();
        for line in BufReader::new(stream).lines() {
            let request: Value = serde_json::from_str(&line.unwrap()).unwrap();
            match reply(&request) {
                Some(text) => {
                    writer.write_all(text.as_bytes()).unwrap();
                    writer.write_all(b"\n").unwrap();
                }
                None => return,
            }
        }
    });
    (addr, handle)
}

fn connect(addr: &str) -> Connection {
    Connection::connect(addr, ClientTimeouts::default()).unwrap()
}

#[test]
fn wrong_fitness_count_is_rejected() {
    let (addr, server) = fake_server(|_| Some(r#"{"action":"EXPERIMENT","payload":{"fitness":[[1.0,2.0]]}}"#.into()));
    let mut conn = connect(&addr);
    let err = conn.experiment(&["x", "y"]).unwrap_err();
    assert!(
        matches!(err, ProtocolError::LengthMismatch { expected: 2, found: 1 }),
        "{err:?}"
    );
    drop(conn);
    server.join().unwrap();
}

#[test]
fn error_reply_surfaces_as_remote_error() {
    let (addr, server) = fake_server(|_| Some(r#"{"action":"ERROR","payload":"unsupported primitive Tan"}"#.into()));
    let mut conn = connect(&addr);
    match conn.experiment(&["Tan x"]) {
        Err(ProtocolError::Remote(msg)) => assert!(msg.contains("Tan"), "{msg}"),
        other => panic!("{other:?}"),
    }
    drop(conn);
    server.join().unwrap();
}

#[test]
fn mismatched_action_and_garbage_are_bad_replies() {
    let (addr, server) = fake_server(|req| {
        Some(match req["action"].as_str().unwrap() {
            "CONFIG" => r#"{"action":"EXPERIMENT","payload":{"fitness":[]}}"#.into(),
            _ => "this is not json".into(),
        })
    });
    let mut conn = connect(&addr);
    assert!(matches!(conn.config(), Err(ProtocolError::BadReply(_))));
    assert!(matches!(
        conn.experiment(&["x"]),
        Err(ProtocolError::Malformed(_) | ProtocolError::BadReply(_))
    ));
    drop(conn);
    server.join().unwrap();
}

#[test]
fn closed_connection_is_reported() {
    let (addr, server) = fake_server(|_| None);
    let mut conn = connect(&addr);
    assert!(matches!(conn.config(), Err(ProtocolError::ConnectionClosed)));
    server.join().unwrap();
}

#[test]
fn slow_experiment_times_out() {
    let (addr, server) = fake_server(|_| {
        thread::sleep(Duration::from_millis(600));
        None
    });
    let timeouts = ClientTimeouts {
        experiment: Some(Duration::from_millis(100)),
        ..ClientTimeouts::default()
    };
    let mut conn = Connection::connect(&addr, timeouts).unwrap();
    assert!(matches!(
        conn.experiment(&["x"]),
        Err(ProtocolError::Timeout(Action::Experiment))
    ));
    drop(conn);
    server.join().unwrap();
}

/// Raw line-level exchange with the Lorenz server.
#[test]
fn lorenz_server_survives_bad_frames_and_shuts_down() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let setup = SimSetup {
        n: 300,
        ..SimSetup::default()
    };
    let server = thread::spawn(move || lorenz_server(&listener, setup, false));

    let stream = TcpStream::connect(addr).unwrap();
    stream.set_read_timeout(Some(Duration::from_secs(30))).unwrap();
    let mut writer = stream.try_clone().unwrap();
    let mut reader = BufReader::new(stream);
    let mut exchange = |line: &str| -> Value {
        writer.write_all(line.as_bytes()).unwrap();
        writer.write_all(b"\n").unwrap();
        let mut reply = String::new();
        reader.read_line(&mut reply).unwrap();
        serde_json::from_str(&reply).unwrap()
    };

    assert_eq!(exchange("{not json")["action"], "ERROR");
    assert_eq!(exchange(r#"{"action":"DANCE","payload":{}}"#)["action"], "ERROR");

    let config = exchange(r#"{"action":"CONFIG","payload":{}}"#);
    assert_eq!(config["action"], "CONFIG");
    assert_eq!(config["payload"]["primitives"]["Add"], 2);
    assert_eq!(config["payload"]["constants"], json!(["k"]));

    let reply = exchange(r#"{"action":"EXPERIMENT","payload":["Sub x x","Exp Exp Exp y","Bogus z"]}"#);
    assert_eq!(reply["action"], "EXPERIMENT");
    let fitness = reply["payload"]["fitness"].as_array().unwrap();
    assert_eq!(fitness.len(), 3);
    assert_eq!(fitness[0].as_array().unwrap().len(), 4);
    assert_eq!(fitness[0][3], 3.0);
    assert!(fitness[0][0].as_f64().unwrap().is_finite());
    assert!(fitness[1][0].is_null(), "diverging trajectory is sent as null");
    assert!(fitness[2].as_array().unwrap().iter().all(Value::is_null));

    assert_eq!(exchange(r#"{"action":"SHUTDOWN","payload":{}}"#), json!({"action":"SHUTDOWN","payload":{}}));
    server.join().unwrap().unwrap();
}
