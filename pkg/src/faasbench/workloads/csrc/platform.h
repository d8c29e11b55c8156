/* Host capabilities a function instance relies on.
 *
 * The native build implements these with POSIX calls; the wasm build
 * imports them from the engine host under the "faas" module name.
 */
#ifndef FAAS_PLATFORM_H
#define FAAS_PLATFORM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __wasm__
#define HOST(name) __attribute__((import_module("faas"), import_name(name)))
#else
#define HOST(name)
#endif

HOST("clock_ns") int64_t plat_clock_ns(void);

/* Request channel. read returns bytes read, 0 on EOF, <0 on error. */
HOST("read") int32_t plat_read(void *buf, int32_t n);
HOST("write") int32_t plat_write(const void *buf, int32_t n);

/* Writes the readiness line to standard output. */
HOST("ready") int32_t plat_ready(const void *line, int32_t n);

/* Copies the value of an environment variable; returns its length or -1. */
HOST("env") int32_t plat_env(const char *name, int32_t name_len, char *dst, int32_t cap);

/* Outbound TCP, used for the storage service. */
HOST("sock_connect") int32_t plat_sock_connect(const char *host, int32_t host_len, int32_t port);
HOST("sock_send") int32_t plat_sock_send(int32_t h, const void *buf, int32_t n);
HOST("sock_recv") int32_t plat_sock_recv(int32_t h, void *buf, int32_t n);
HOST("sock_close") int32_t plat_sock_close(int32_t h);

/* Shared entry points, defined in function.c. */
int32_t faas_serve(void);
int32_t faas_handle(const uint8_t *req, int32_t req_len, uint8_t **resp);
uint8_t *faas_scratch(int32_t n);
void faas_init(void);

void *faas_memcpy(void *dst, const void *src, size_t n);
void *faas_memset(void *dst, int c, size_t n);

#endif
