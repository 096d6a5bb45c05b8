# Persistent notebook-style execution kernel.
#
# Speaks a length-prefixed JSON frame protocol over the fds it inherits as
# stdin/stdout: each frame is a 4-byte big-endian payload length followed by
# that many bytes of UTF-8 JSON.  The first frame must be an "init" carrying
# base64 input images and resource caps; every later frame is either an exec
# request {"id": n, "source": code} or {"op": "shutdown"}.
#
# The real pipe fds are duplicated away at startup and fds 0/1 are pointed at
# /dev/null, so user code that prints to a raw fd, spawns a subprocess, or
# calls input() cannot corrupt the frame stream.

import base64
import io
import json
import os
import struct
import sys
import traceback

_ns = {}          # the shared notebook namespace, survives across cells
_captured = []    # base64 PNGs collected from plt.show() during one cell


def _steal_stdio():
    real_in = os.dup(0)
    real_out = os.dup(1)
    devnull = os.open(os.devnull, os.O_RDWR)
    os.dup2(devnull, 0)
    os.dup2(devnull, 1)
    os.close(devnull)
    return os.fdopen(real_in, 'rb', buffering=0), os.fdopen(real_out, 'wb', buffering=0)


_frame_in, _frame_out = _steal_stdio()


def _read_exact(n):
    buf = b''
    while len(buf) < n:
        chunk = _frame_in.read(n - len(buf))
        if not chunk:
            return None
        buf += chunk
    return buf


def _read_frame():
    header = _read_exact(4)
    if header is None:
        return None
    (length,) = struct.unpack('>I', header)
    payload = _read_exact(length)
    if payload is None:
        return None
    return json.loads(payload.decode('utf-8'))


def _write_frame(obj):
    payload = json.dumps(obj, separators=(',', ':')).encode('utf-8')
    _frame_out.write(struct.pack('>I', len(payload)) + payload)


def _setup_matplotlib():
    # Imported eagerly so the one-time font cache build happens before the
    # disk write guard goes up.  plt.show() is rebound to capture figures.
    import matplotlib
    matplotlib.use('Agg', force=True)
    import matplotlib.pyplot as plt

    def _capture_show(*args, **kwargs):
        for num in plt.get_fignums():
            fig = plt.figure(num)
            buf = io.BytesIO()
            fig.savefig(buf, format='png')
            _captured.append(base64.b64encode(buf.getvalue()).decode('ascii'))
        plt.close('all')

    plt.show = _capture_show


def _install_guards():
    # Opening a file for write raises the sandbox contract error; reads stay
    # allowed.  os-level fd tricks are out of scope: the supervisor keeps a
    # canary check in its tests, not a security boundary.
    import builtins
    real_open = builtins.open

    def guarded_open(file, mode='r', *args, **kwargs):
        if isinstance(mode, str) and any(c in mode for c in 'wxa+'):
            raise PermissionError('Writing file to disk is not allowed')
        return real_open(file, mode, *args, **kwargs)

    builtins.open = guarded_open
    io.open = guarded_open
    try:
        # Older pathlib captured io.open in an accessor at import time.
        import pathlib
        pathlib._normal_accessor.open = guarded_open
    except (ImportError, AttributeError):
        pass

    import socket

    def _no_network(*args, **kwargs):
        raise PermissionError('Network access from the sandbox is not allowed')

    socket.socket.connect = _no_network
    socket.socket.connect_ex = _no_network


def _apply_memory_cap(memory_mb):
    if not memory_mb or memory_mb <= 0:
        return
    try:
        import resource
        cap = int(memory_mb) * 1024 * 1024
        # RLIMIT_DATA covers brk plus private anonymous mappings on modern
        # kernels, so it caps the heap without counting shared library text.
        resource.setrlimit(resource.RLIMIT_DATA, (cap, cap))
    except (ImportError, ValueError, OSError):
        pass


def _handle_init(msg):
    _apply_memory_cap(msg.get('memory_mb'))
    from PIL import Image
    for i, b64 in enumerate(msg.get('images') or [], start=1):
        img = Image.open(io.BytesIO(base64.b64decode(b64)))
        img.load()
        _ns['image_%d' % i] = img
    _install_guards()
    return {'id': msg.get('id'), 'status': 'ok'}


def _run_cell(source):
    out, err = io.StringIO(), io.StringIO()
    status = 'ok'
    old_out, old_err = sys.stdout, sys.stderr
    sys.stdout, sys.stderr = out, err
    try:
        exec(compile(source, '<cell>', 'exec'), _ns)
    except BaseException:
        traceback.print_exc(file=err)
        status = 'error'
    finally:
        sys.stdout, sys.stderr = old_out, old_err
    images = list(_captured)
    del _captured[:]
    return {'stdout': out.getvalue(), 'stderr': err.getvalue(),
            'images': images, 'status': status}


def main():
    _setup_matplotlib()
    while True:
        msg = _read_frame()
        if msg is None or msg.get('op') == 'shutdown':
            break
        if msg.get('op') == 'init':
            try:
                _write_frame(_handle_init(msg))
            except Exception as exc:
                _write_frame({'id': msg.get('id'), 'status': 'init-error',
                              'error': '%s: %s' % (type(exc).__name__, exc)})
        elif 'source' in msg:
            reply = _run_cell(msg['source'])
            reply['id'] = msg.get('id')
            _write_frame(reply)
        else:
            _write_frame({'id': msg.get('id'), 'status': 'protocol-error'})


if __name__ == '__main__':
    main()
