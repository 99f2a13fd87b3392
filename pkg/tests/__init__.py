# Tests package for sigexec
