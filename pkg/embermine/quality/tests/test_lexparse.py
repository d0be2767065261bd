from django.test import SimpleTestCase

from quality.diagnostics import LEX_ERROR, PARSE_ERROR
from quality.lexparse import (
    COMMENT,
    DIRECTIVE,
    IDENTIFIER,
    KEYWORD,
    LITERAL,
    PUNCTUATOR,
    IsrConfig,
    classify_isr,
    decode_source,
    parse_source,
    reconstruct,
    registration_targets,
    tokenize,
)

from .fixtures import SNIPPET_ONE, TONE


class TokenizeTests(SimpleTestCase):
    def test_minimal_declaration(self):
        tokens = tokenize("int flag = 0;")
        self.assertEqual(
            [(t.kind, t.text) for t in tokens],
            [(KEYWORD, "int"), (IDENTIFIER, "flag"), (PUNCTUATOR, "="), (LITERAL, "0"), (PUNCTUATOR, ";")],
        )

    def test_positions(self):
        tokens = tokenize("int a;\n  b = 1;")
        b = tokens[3]
        self.assertEqual((b.text, b.line, b.column), ("b", 2, 3))

    def test_reconstruction_is_lossless(self):
        for source in (
            SNIPPET_ONE,
            TONE,
            "#define MAX(a, b) \\\n  ((a) > (b) ? (a) : (b))\r\nint x = MAX(1, 2);  \n\n",
            "/* block\n comment */ char c = '\\n'; const char *s = \"a\\\"b\";\t",
            "",
        ):
            with self.subTest(source=source[:20]):
                self.assertEqual(reconstruct(tokenize(source)), source)

    def test_comments_and_directives(self):
        tokens = tokenize('#include "board.h"\n// note\nint x; /* more */\n')
        kinds = [t.kind for t in tokens]
        self.assertEqual(kinds[0], DIRECTIVE)
        self.assertEqual(kinds[1], COMMENT)
        self.assertEqual(kinds[-1], COMMENT)

    def test_hash_inside_line_is_an_operator(self):
        tokens = tokenize("#define STR(x) #x\nint a = b # c;\n")
        self.assertEqual(tokens[0].kind, DIRECTIVE)
        self.assertIn((PUNCTUATOR, "#"), [(t.kind, t.text) for t in tokens[1:]])

    def test_unterminated_comment_is_reported(self):
        tokens = tokenize("int a;\n/* never closed\nint b;\n")
        self.assertEqual(len(tokens.errors), 1)
        self.assertEqual(tokens.errors[0].line, 2)
        self.assertEqual(tokens.errors[0].message, "unterminated comment")
        # lexing resumes on the next line
        self.assertIn("b", [t.text for t in tokens])

    def test_unterminated_string_is_reported(self):
        model = parse_source('char *s = "open;\nint x;\n', "a.c")
        self.assertEqual([(d.rule_id, d.line) for d in model.diagnostics], [(LEX_ERROR, 1)])

    def test_decode_falls_back_to_cp1252(self):
        self.assertEqual(decode_source("// ação\n".encode("utf-8")), "// ação\n")
        self.assertEqual(decode_source("// caf\xe9\n".encode("cp1252")), "// caf\xe9\n")
        self.assertIsNone(decode_source(b"\x81\x8d\x8f\x90\x9d"))


class ParseTests(SimpleTestCase):
    def test_violation_example_model(self):
        model = parse_source(SNIPPET_ONE, "main.c")
        self.assertEqual(model.diagnostics, [])
        handler, main = model.definitions()
        self.assertEqual(handler.name, "GPIO_Handler")
        self.assertEqual(
            [(c.name, c.line) for c in handler.calls],
            [("gpio_put", 6), ("sleep_ms", 7), ("printf", 8)],
        )
        self.assertEqual([(w.name, w.line) for w in handler.writes], [("flag", 5)])

        self.assertEqual(main.name, "main")
        self.assertEqual([(loop.kind, loop.line) for loop in main.loops], [("while", 14)])
        self.assertEqual([(c.name, c.line) for c in main.calls], [("sprintf", 16)])
        self.assertEqual(len(main.locals), 1)
        status = main.locals[0]
        self.assertEqual((status.name, status.line, status.is_volatile), ("status", 13, True))

        self.assertEqual(
            [(v.name, v.line, v.is_volatile) for v in model.global_vars],
            [("flag", 1, False), ("cnt", 2, True)],
        )

    def test_for_loop_variable_without_initializer(self):
        model = parse_source(TONE, "tone.c")
        (tone,) = model.definitions()
        self.assertEqual([(loop.kind, loop.line) for loop in tone.loops], [("for", 4)])
        locals_ = {var.name: var for var in tone.locals}
        self.assertFalse(locals_["i"].initialized_at_decl)
        self.assertTrue(locals_["periodo"].initialized_at_decl)
        self.assertEqual([p.name for p in tone.params], ["freq", "time"])

    def test_do_while_is_one_loop(self):
        model = parse_source("void f(void) {\n  do {\n    x++;\n  } while (x < 3);\n}\n", "f.c")
        self.assertEqual([(loop.kind, loop.line) for loop in model.definitions()[0].loops], [("do", 2)])

    def test_qualifiers(self):
        model = parse_source(
            "static const int table[4] = {1, 2, 3, 4};\n"
            "extern volatile unsigned int ticks;\n"
            "const char *name;\n"
            "char *const fixed = 0;\n",
            "q.c",
        )
        by_name = {var.name: var for var in model.global_vars}
        self.assertTrue(by_name["table"].is_const and by_name["table"].is_static)
        self.assertTrue(by_name["ticks"].is_extern and by_name["ticks"].is_volatile)
        # pointer to const is itself writable
        self.assertFalse(by_name["name"].is_const)
        self.assertTrue(by_name["fixed"].is_const)

    def test_prototypes_are_not_definitions(self):
        model = parse_source("int add(int a, int b);\nint add(int a, int b) { return a + b; }\n", "m.c")
        self.assertEqual([(fn.name, fn.is_definition) for fn in model.functions], [("add", False), ("add", True)])

    def test_member_names_are_not_accesses(self):
        model = parse_source("void f(void) {\n  dev.count = 1;\n  p->count++;\n}\n", "m.c")
        fn = model.definitions()[0]
        self.assertEqual(sorted({a.name for a in fn.accesses()}), ["dev", "p"])

    def test_unbalanced_braces_reported(self):
        model = parse_source("void f(void) {\n  if (x) {\n", "broken.c")
        self.assertIn(PARSE_ERROR, [d.rule_id for d in model.diagnostics])

    def test_include_guard_forms(self):
        guarded = parse_source("#ifndef UTIL_H\n#define UTIL_H\nint add(int, int);\n#endif /* UTIL_H */\n", "util.h")
        self.assertTrue(guarded.guard.has_ifndef_define_pair)
        self.assertEqual(guarded.guard.macro, "UTIL_H")

        defined = parse_source("#if !defined(UTIL_H)\n#define UTIL_H\n#endif\n", "util.h")
        self.assertTrue(defined.guard.has_ifndef_define_pair)

        pragma = parse_source("#pragma once\nint add(int, int);\n", "util.h")
        self.assertFalse(pragma.guard.has_ifndef_define_pair)
        self.assertTrue(pragma.guard.has_pragma_once)

        trailing_code = parse_source("#ifndef A_H\n#define A_H\n#endif\nint x;\n", "a.h")
        self.assertFalse(trailing_code.guard.has_ifndef_define_pair)

    def test_extern_c_block(self):
        model = parse_source(
            "#ifndef A_H\n#define A_H\n#ifdef __cplusplus\nextern \"C\" {\n#endif\n"
            "int api(void);\n#ifdef __cplusplus\n}\n#endif\n#endif\n",
            "a.h",
        )
        self.assertEqual(model.diagnostics, [])
        self.assertEqual([fn.name for fn in model.functions], ["api"])
        self.assertTrue(model.guard.has_ifndef_define_pair)

    def test_includes(self):
        model = parse_source('#include <stdio.h>\n#include "pico/stdlib.h"\n', "m.c")
        self.assertEqual(model.includes, ["stdio.h", "pico/stdlib.h"])


class IsrTests(SimpleTestCase):
    def test_name_patterns(self):
        model = parse_source(
            "void GPIO_Handler(void) {}\nvoid TIM2_IRQHandler(void) {}\nvoid adc_callback(void) {}\nvoid main(void) {}\n",
            "isr.c",
        )
        self.assertEqual(classify_isr(model, IsrConfig()), {"GPIO_Handler", "TIM2_IRQHandler", "adc_callback"})

    def test_registration_call(self):
        model = parse_source(
            "void on_edge(uint gpio, uint32_t events) {\n  count++;\n}\n"
            "int main(void) {\n  gpio_set_irq_enabled_with_callback(2, 0x8, true, &on_edge);\n}\n",
            "main.c",
        )
        self.assertEqual(classify_isr(model, IsrConfig()), {"on_edge"})

    def test_registration_in_another_file(self):
        main = parse_source("int main(void) {\n  irq_set_exclusive_handler(5, uart_rx);\n}\n", "main.c")
        uart = parse_source("void uart_rx(void) {\n}\n", "uart.c")
        cfg = IsrConfig()
        self.assertEqual(classify_isr(uart, cfg), set())
        self.assertEqual(classify_isr(uart, cfg, registration_targets([main, uart], cfg)), {"uart_rx"})

    def test_custom_patterns(self):
        model = parse_source("void isr_timer(void) {}\nvoid GPIO_Handler(void) {}\n", "isr.c")
        self.assertEqual(classify_isr(model, IsrConfig(patterns=("isr_*",))), {"isr_timer"})
