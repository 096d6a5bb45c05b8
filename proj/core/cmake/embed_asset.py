#!/usr/bin/env python3
"""Embed a text asset into a C++ header as a raw string literal constant."""
import sys


def main() -> int:
    src, dst, var = sys.argv[1], sys.argv[2], sys.argv[3]
    with open(src, 'rb') as f:
        content = f.read().decode('utf-8')
    delim = 'asset'
    while (')' + delim + '"') in content:
        delim += '_'
    header = (
        '// Generated file - do not edit.\n'
        '#pragma once\n'
        '#include <string_view>\n\n'
        'namespace agentloop::assets {\n\n'
        f'inline constexpr std::string_view {var} = R"{delim}({content}){delim}";\n\n'
        '}  // namespace agentloop::assets\n'
    )
    with open(dst, 'w', encoding='utf-8', newline='') as f:
        f.write(header)
    return 0


if __name__ == '__main__':
    raise SystemExit(main())
