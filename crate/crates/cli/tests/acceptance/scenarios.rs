//! ANDL sources for the acceptance scenarios.

use std::fmt::Write;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::support::can_bits;

pub struct CanMatrix {
    pub text: String,
    /// Sum of frame bits over period, bit/s.
    pub analytical_bps: f64,
}

/// 30 periodic messages from six ECUs on one 500 kbit/s bus.
pub fn can_matrix(rng: &mut ChaCha8Rng) -> CanMatrix {
    let periods_ms = [5u64, 10, 20, 50, 100, 200, 500, 1000];
    loop {
        let mut ids: Vec<u32> = (1..=2000).collect();
        ids.shuffle(rng);
        let mut msgs = String::new();
        let mut bps = 0.0;
        for (i, id) in ids.iter().take(30).enumerate() {
            let n: u64 = rng.gen_range(0..=8);
            let p = periods_ms[rng.gen_range(0..periods_ms.len())];
            let off = rng.gen_range(0..p * 1000);
            bps += can_bits(n) as f64 * 1000.0 / p as f64;
            let _ = writeln!(
                msgs,
                "    message m{i} {{ sender e{}; receivers sink; payload {n}B; period {p}ms; offset {off}us; \
                 mapping {{ body: can{{id {id};}}; }} }}",
                i % 6
            );
        }
        if !(0.3 * 500_000.0..=0.7 * 500_000.0).contains(&bps) {
            continue;
        }
        let text = format!(
            "network canMatrix {{
  devices {{
    canLink bus {{ bandwidth 500kb/s; }}
    node e0; node e1; node e2; node e3; node e4; node e5; node sink;
  }}
  connections {{
    segment body {{
      e0 <--> bus; e1 <--> bus; e2 <--> bus; e3 <--> bus; e4 <--> bus; e5 <--> bus; sink <--> bus;
    }}
  }}
  communication {{
{msgs}  }}
}}
"
        );
        return CanMatrix { text, analytical_bps: bps };
    }
}

/// Talker and listener at the ends of a chain of `switches` switches. Every
/// switch also hosts a best-effort source flooding the next chain link.
pub fn avb_chain(switches: usize, a_payload: u32) -> String {
    let mut devs = String::from("    node talker; node listener;\n");
    let mut conns = String::from("      talker <--> sw1;\n");
    let mut msgs = format!(
        "    message aStream {{ sender talker; receivers listener; payload {a_payload}B; period 125us; \
         mapping {{ eth: avb{{id 1; class A;}}; }} }}\n"
    );
    for i in 1..=switches {
        let _ = writeln!(devs, "    switch sw{i}; node x{i};");
        let _ = writeln!(conns, "      x{i} <--> sw{i};");
        let sink = if i < switches {
            let _ = writeln!(devs, "    node y{i};");
            let _ = writeln!(conns, "      y{i} <--> sw{};", i + 1);
            let _ = writeln!(conns, "      sw{i} <--> sw{};", i + 1);
            format!("y{i}")
        } else {
            let _ = writeln!(conns, "      sw{i} <--> listener;");
            "listener".to_string()
        };
        let _ = writeln!(
            msgs,
            "    message flood{i} {{ sender x{i}; receivers {sink}; payload 1500B; period 125us; \
             mapping {{ eth: be{{priority 0;}}; }} }}"
        );
    }
    format!(
        "network chain {{
  inline ini {{
```
settings.recordQueues = false
settings.recordCredit = false
settings.recordTx = false
```
  }}
  devices {{
{devs}  }}
  connections {{
    segment eth {{
{conns}    }}
  }}
  communication {{
{msgs}  }}
}}
"
    )
}

/// Two switches with three hosts each.
fn two_switch_net(name: &str, msgs: &str, ini: &str) -> String {
    format!(
        "network {name} {{
  inline ini {{
```
{ini}
```
  }}
  devices {{
    switch s1; switch s2;
    node n0; node n1; node n2; node n3; node n4; node n5;
  }}
  connections {{
    segment eth {{
      s1 <--> s2;
      n0 <--> s1; n1 <--> s1; n2 <--> s1;
      n3 <--> s2; n4 <--> s2; n5 <--> s2;
    }}
  }}
  communication {{
{msgs}  }}
}}
"
    )
}

fn two_hosts(rng: &mut ChaCha8Rng) -> (usize, usize) {
    let a = rng.gen_range(0..6);
    let mut b = rng.gen_range(0..6);
    while b == a {
        b = rng.gen_range(0..6);
    }
    (a, b)
}

/// Random class A and B streams with best-effort background load. Retries
/// until the reservation fits every port.
pub fn random_avb(rng: &mut ChaCha8Rng) -> String {
    let periods = [125u64, 250, 500, 1000];
    loop {
        let mut msgs = String::new();
        for i in 0..rng.gen_range(4..10) {
            let (a, b) = two_hosts(rng);
            let class = if rng.gen_bool(0.5) { "A" } else { "B" };
            let _ = writeln!(
                msgs,
                "    message s{i} {{ sender n{a}; receivers n{b}; payload {}B; period {}us; offset {}us; \
                 mapping {{ eth: avb{{id {i}; class {class};}}; }} }}",
                rng.gen_range(50..1200),
                periods[rng.gen_range(0..periods.len())],
                rng.gen_range(0..125)
            );
        }
        for i in 0..rng.gen_range(2..6) {
            let (a, b) = two_hosts(rng);
            let _ = writeln!(
                msgs,
                "    message bg{i} {{ sender n{a}; receivers n{b}; payload {}B; period {}us; \
                 mapping {{ eth: be{{priority 0;}}; }} }}",
                rng.gen_range(46..1500),
                rng.gen_range(100..400)
            );
        }
        let text = two_switch_net("avbMix", &msgs, "settings.recordQueues = false");
        if crate::support::try_compile(&text).is_some() {
            return text;
        }
    }
}

/// Random rate-constrained virtual links, some sent faster than their BAG.
pub fn random_rc(rng: &mut ChaCha8Rng) -> String {
    let bags = [250u64, 500, 1000, 2000];
    let mut msgs = String::new();
    for i in 0..rng.gen_range(4..12) {
        let (a, b) = two_hosts(rng);
        let bag = bags[rng.gen_range(0..bags.len())];
        let period = if rng.gen_bool(0.3) { bag / 2 } else { bag * rng.gen_range(1..4) };
        let _ = writeln!(
            msgs,
            "    message v{i} {{ sender n{a}; receivers n{b}; payload {}B; period {period}us; offset {}us; \
             mapping {{ eth: rc{{vlID {}; bag {bag}us;}}; }} }}",
            rng.gen_range(46..1000),
            rng.gen_range(0..bag),
            i + 1
        );
    }
    for i in 0..3 {
        let (a, b) = two_hosts(rng);
        let _ = writeln!(
            msgs,
            "    message bg{i} {{ sender n{a}; receivers n{b}; payload 1200B; period 200us; \
             mapping {{ eth: be{{priority 1;}}; }} }}"
        );
    }
    two_switch_net("rcMix", &msgs, "settings.recordQueues = false")
}

/// 20 time-triggered messages over a line of three switches.
pub fn tt_line(rng: &mut ChaCha8Rng) -> String {
    let periods = [500u64, 1000, 2000];
    let mut msgs = String::new();
    for i in 0..20 {
        let a = rng.gen_range(0..9);
        let mut b = rng.gen_range(0..9);
        while b == a {
            b = rng.gen_range(0..9);
        }
        let _ = writeln!(
            msgs,
            "    message t{i} {{ sender h{a}; receivers h{b}; payload {}B; period {}us; \
             mapping {{ eth: tt{{ctID {};}}; }} }}",
            rng.gen_range(46..400),
            periods[rng.gen_range(0..periods.len())],
            i + 1
        );
    }
    format!(
        "network ttLine {{
  devices {{
    switch s1; switch s2; switch s3;
    node h0; node h1; node h2; node h3; node h4; node h5; node h6; node h7; node h8;
  }}
  connections {{
    segment eth {{
      s1 <--> s2; s2 <--> s3;
      h0 <--> s1; h1 <--> s1; h2 <--> s1;
      h3 <--> s2; h4 <--> s2; h5 <--> s2;
      h6 <--> s3; h7 <--> s3; h8 <--> s3;
    }}
  }}
  communication {{
{msgs}  }}
}}
"
    )
}

/// CAN senders feeding two pools of one gateway towards an Ethernet sink.
/// Hold-up times are explicit or come from the gateway policy.
pub fn pool_feed(rng: &mut ChaCha8Rng) -> String {
    let mut ids: Vec<u32> = (1..=400).collect();
    ids.shuffle(rng);
    let mut msgs = String::new();
    for (i, id) in ids.iter().take(rng.gen_range(1..=6)).enumerate() {
        let period = rng.gen_range(5..=200) * 100;
        let holdup = match rng.gen_range(0..4) {
            0 => String::new(),
            1 => "{holdUp 0us;}".to_string(),
            _ => format!("{{holdUp {}us;}}", rng.gen_range(1..=60) * 100),
        };
        let _ = writeln!(
            msgs,
            "    message c{i} {{ sender c{}; receivers log; payload {}B; period {period}us; offset {}us; \
             mapping {{ can: can{{id {id};}}; gw: pool p{}{holdup}; eth: be{{priority 0;}}; }} }}",
            i % 4,
            rng.gen_range(0..=8),
            rng.gen_range(0..period),
            rng.gen_range(0..2)
        );
    }
    format!(
        "network poolFeed {{
  inline ini {{
```
settings.recordQueues = false
settings.recordTx = false
```
  }}
  devices {{
    canLink cb;
    node c0; node c1; node c2; node c3; node log;
    switch s;
    gateway gw {{ pool p0; pool p1; holdUpPolicy config1; }}
  }}
  connections {{
    segment can {{ c0 <--> cb; c1 <--> cb; c2 <--> cb; c3 <--> cb; gw <--> cb; }}
    segment eth {{ gw <--> s; log <--> s; }}
  }}
  communication {{
{msgs}  }}
}}
"
    )
}

pub struct AggMessage {
    pub name: String,
    pub id: u32,
}

/// Two CAN buses whose gateways forward every message over a switched
/// backbone to a logger. With `pooled` the gateways aggregate under the
/// config1 policy; otherwise each CAN frame travels alone.
pub fn aggregation(rng: &mut ChaCha8Rng, pooled: bool) -> (String, Vec<AggMessage>) {
    let periods = [10u64, 20, 50, 100];
    let mut msgs = String::new();
    let mut list = Vec::new();
    for (bus, base) in [("A", 0u32), ("B", 5)] {
        for band in [50u32, 150, 250, 350] {
            for k in 0..3u32 {
                let id = band + 10 * k + base;
                let name = format!("m{bus}{id}");
                let period = periods[rng.gen_range(0..periods.len())];
                let gw = if pooled { format!("gw{bus}: pool agg;") } else { format!("gw{bus};") };
                let _ = writeln!(
                    msgs,
                    "    message {name} {{ sender e{bus}{k}; receivers log; payload 8B; period {period}ms; \
                     offset {}us; mapping {{ can{bus}: can{{id {id};}}; {gw} backbone: be{{priority 3;}}; }} }}",
                    rng.gen_range(0..period * 1000)
                );
                list.push(AggMessage { name, id });
            }
        }
    }
    let text = format!(
        "network agg {{
  inline ini {{
```
settings.recordQueues = false
```
  }}
  devices {{
    canLink busA; canLink busB;
    node eA0; node eA1; node eA2; node eB0; node eB1; node eB2; node log;
    gateway gwA {{ pool agg; holdUpPolicy config1; }}
    gateway gwB {{ pool agg; holdUpPolicy config1; }}
    switch sw;
  }}
  connections {{
    segment canA {{ eA0 <--> busA; eA1 <--> busA; eA2 <--> busA; gwA <--> busA; }}
    segment canB {{ eB0 <--> busB; eB1 <--> busB; eB2 <--> busB; gwB <--> busB; }}
    segment backbone {{ gwA <--> sw; gwB <--> sw; log <--> sw; }}
  }}
  communication {{
{msgs}  }}
}}
"
    );
    (text, list)
}

/// One sender reaching three receivers behind a switch, either with one
/// multicast virtual link or with a unicast virtual link per receiver.
pub fn fanout(multicast: bool) -> String {
    let msgs = if multicast {
        "    message mc { sender src; receivers r1, r2, r3; payload 1000B; period 1ms; multicast true; \
         mapping { eth: rc{vlID 1; bag 1ms;}; } }\n"
            .to_string()
    } else {
        (1..=3)
            .map(|i| {
                format!(
                    "    message u{i} {{ sender src; receivers r{i}; payload 1000B; period 1ms; \
                     mapping {{ eth: rc{{vlID {i}; bag 1ms;}}; }} }}\n"
                )
            })
            .collect()
    };
    format!(
        "network fanout {{
  devices {{ node src; node r1; node r2; node r3; switch sw; ethernetLink up; }}
  connections {{
    segment eth {{ src <--> up <--> sw; r1 <--> sw; r2 <--> sw; r3 <--> sw; }}
  }}
  communication {{
{msgs}  }}
}}
"
    )
}

/// Ten ECUs with ids 10..100 sharing one bus at close to full load.
pub fn can_priority() -> String {
    let mut devs = String::new();
    let mut conns = String::new();
    let mut msgs = String::new();
    for k in 1..=10 {
        let _ = write!(devs, "node n{k}; ");
        let _ = write!(conns, "n{k} <--> bus; ");
        let _ = writeln!(
            msgs,
            "    message p{k} {{ sender n{k}; receivers sink; payload 8B; period 2750us; \
             mapping {{ body: can{{id {};}}; }} }}",
            10 * k
        );
    }
    format!(
        "network prio {{
  devices {{ canLink bus {{ bandwidth 500kb/s; }} node sink; {devs}}}
  connections {{ segment body {{ sink <--> bus; {conns}}} }}
  communication {{
{msgs}  }}
}}
"
    )
}
