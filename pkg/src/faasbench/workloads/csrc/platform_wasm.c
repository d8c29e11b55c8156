/* Freestanding wasm32 build: host capabilities are imported from the engine
 * host (see platform.h), and the serve loop plus a direct handler are exported. */
#include "platform.h"

#define EXPORT(name) __attribute__((export_name(name)))

/* The compiler may lower struct copies and loops to these. */
void *memcpy(void *dst, const void *src, size_t n) { return faas_memcpy(dst, src, n); }
void *memset(void *dst, int c, size_t n) { return faas_memset(dst, c, n); }

static uint8_t *g_response;
static int g_initialized;

EXPORT("serve") int32_t wasm_serve(void) { return faas_serve(); }

EXPORT("scratch") uint8_t *wasm_scratch(int32_t n) { return faas_scratch(n); }

/* Handles one request document already placed in the scratch buffer. */
EXPORT("handle") int32_t wasm_handle(const uint8_t *req, int32_t n) {
    if (!g_initialized) {
        faas_init();
        g_initialized = 1;
    }
    return faas_handle(req, n, &g_response);
}

EXPORT("response") uint8_t *wasm_response(void) { return g_response; }
