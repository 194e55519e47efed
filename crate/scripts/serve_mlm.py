"""Serve a masked LM over HTTP for the `http` backend and `remote` encoder.

    python scripts/serve_mlm.py --model bert-base-cased --port 8080

POST /fill-mask  {"inputs": "... [MASK] ...", "parameters": {"top_k": 50}}
POST /features   {"inputs": "..."}
"""

import argparse
import json
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from transformers import pipeline


def make_handler(fill, extract):
    class Handler(BaseHTTPRequestHandler):
        def do_POST(self):
            body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
            text = body["inputs"]
            if self.path == "/fill-mask":
                top_k = body.get("parameters", {}).get("top_k", 50)
                out = [{"token_str": c["token_str"], "score": c["score"]} for c in fill(text, top_k=top_k)]
            elif self.path == "/features":
                out = extract(text)
            else:
                self.send_error(404)
                return
            data = json.dumps(out).encode()
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(data)))
            self.end_headers()
            self.wfile.write(data)

    return Handler


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--model", default="bert-base-cased")
    ap.add_argument("--host", default="127.0.0.1")
    ap.add_argument("--port", type=int, default=8080)
    args = ap.parse_args()
    fill = pipeline("fill-mask", model=args.model)
    extract = pipeline("feature-extraction", model=args.model)
    print(f"serving {args.model}; mask token {fill.tokenizer.mask_token}", flush=True)
    ThreadingHTTPServer((args.host, args.port), make_handler(fill, extract)).serve_forever()


if __name__ == "__main__":
    main()
