"""Steering a live backtest session over the HTTP API.

Starts the service in-process (the `earnmore serve` CLI does the same
thing), creates a session, steps it, removes and re-adds a stock mid-run,
and tails the server-sent event stream.
"""
import datetime as dt
import json
import tempfile
import threading
import urllib.request
from pathlib import Path

import numpy as np

from earnmore import TrainConfig, build_dataset, load_ohlcv, parse_splits
from earnmore.steering import SteeringService, make_server
from earnmore.trainer import init_params

rng = np.random.default_rng(3)
start = dt.date(2022, 1, 3)
rows = ["date,ticker,open,high,low,close,volume"]
prices = {"ACME": 50.0, "GLOBX": 120.0, "INITECH": 80.0}
for day in range(80):
    date = start + dt.timedelta(days=day)
    for t, p in prices.items():
        close = p * (1 + rng.normal(0.0005, 0.01))
        rows.append(f"{date},{t},{p:.4f},{max(p, close):.4f},"
                    f"{min(p, close):.4f},{close:.4f},1000")
        prices[t] = close
path = Path(tempfile.mkdtemp()) / "bars.csv"
path.write_text("\n".join(rows) + "\n")
dataset = build_dataset(load_ohlcv(path), window=10, splits=parse_splits(
    {"test": [str(start), str(start + dt.timedelta(days=79))]}))

params = init_params(TrainConfig(embed_dim=16, hidden_dim=16), dataset,
                     np.random.default_rng(0))
service = SteeringService(dataset, params, default_split="test")
server = make_server(service, port=0)
threading.Thread(target=server.serve_forever, daemon=True).start()
base = f"http://127.0.0.1:{server.server_address[1]}"
print(f"service up at {base}")


def call(method, route, body=None):
    data = json.dumps(body).encode() if body is not None else None
    req = urllib.request.Request(base + route, data=data, method=method,
                                 headers={"Content-Type": "application/json"})
    with urllib.request.urlopen(req, timeout=10) as resp:
        return json.loads(resp.read())


print("universe:", call("GET", "/universe")["tickers"])

session = call("POST", "/sessions", {"temperature": 0.5})
sid = session["id"]
print(f"created session {sid} at step {session['step']}")

call("POST", f"/sessions/{sid}/step", {"count": 5})
print("after 5 steps:", np.round(call("GET", f"/sessions/{sid}")["values"], 4))

print("\nremoving GLOBX from the pool ...")
update = call("POST", f"/sessions/{sid}/pool", {"remove": ["GLOBX"]})
print("selected now:", update["selected_tickers"])

call("POST", f"/sessions/{sid}/step", {"count": 5})
snap = call("GET", f"/sessions/{sid}")
print(f"value after 10 steps: {snap['value']:.4f}; metrics so far:",
      {k: None if v is None else round(v, 4) for k, v in snap["metrics"].items()})

print("\nfirst six streamed events:")
req = urllib.request.Request(f"{base}/sessions/{sid}/events")
with urllib.request.urlopen(req, timeout=10) as stream:
    seen = 0
    while seen < 6:
        line = stream.readline().decode().strip()
        if line.startswith("data: "):
            event = json.loads(line[6:])
            print(f"  seq {event['seq']:>2} {event['type']:>5} "
                  f"step {event.get('step')}")
            seen += 1

server.shutdown()
print("\nserver stopped")
