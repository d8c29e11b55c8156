/* Reference texts for the trigram language profiles (ASCII only). */
#ifndef FAAS_LANG_SAMPLES_H
#define FAAS_LANG_SAMPLES_H

static const char *const LANG_TAGS[] = {"en", "de", "es", "fr"};

static const char *const LANG_SAMPLES[] = {
    /* en */
    "The morning train left the station a little after seven, and most of the people on board "
    "were reading or looking out of the window at the fields. It had rained during the night, so "
    "the roads were still wet and the trees along the river were shining in the low light. My "
    "brother was sitting next to me with a book about the history of the city, which he had bought "
    "the day before at a small shop near the harbour. He told me that the old bridge was built more "
    "than three hundred years ago and that the people who lived there had to pay a toll every time "
    "they wanted to cross it. When we arrived, we walked through the market and bought bread, "
    "cheese and some apples for the afternoon. The weather was getting better, and by noon the sun "
    "was warm enough that we could sit outside and eat our lunch in the park. There were children "
    "playing with a dog, and an old man who was feeding the birds with the rest of his sandwich. "
    "We talked about work, about our friends, and about the things that we would like to do next "
    "summer if we have the time and the money. In the evening we took the last train back home.",
    /* de */
    "Der Zug verliess den Bahnhof kurz nach sieben Uhr, und die meisten Leute im Wagen lasen die "
    "Zeitung oder schauten aus dem Fenster auf die Felder. In der Nacht hatte es geregnet, deshalb "
    "waren die Strassen noch nass und die Baeume am Fluss glaenzten im flachen Licht. Mein Bruder "
    "sass neben mir mit einem Buch ueber die Geschichte der Stadt, das er am Tag vorher in einem "
    "kleinen Laden am Hafen gekauft hatte. Er erzaehlte mir, dass die alte Bruecke vor mehr als "
    "dreihundert Jahren gebaut wurde und dass die Menschen, die dort lebten, jedes Mal einen Zoll "
    "bezahlen mussten, wenn sie hinueber gehen wollten. Als wir ankamen, gingen wir ueber den Markt "
    "und kauften Brot, Kaese und einige Aepfel fuer den Nachmittag. Das Wetter wurde besser, und "
    "gegen Mittag war die Sonne so warm, dass wir draussen sitzen und im Park unser Essen geniessen "
    "konnten. Dort spielten Kinder mit einem Hund, und ein alter Mann fuetterte die Voegel mit dem "
    "Rest seines Brotes. Wir sprachen ueber die Arbeit, ueber unsere Freunde und ueber die Dinge, "
    "die wir im naechsten Sommer machen wollen, wenn wir Zeit und Geld haben. Am Abend fuhren wir "
    "mit dem letzten Zug wieder nach Hause.",
    /* es */
    "El tren de la manana salio de la estacion poco despues de las siete, y la mayoria de las "
    "personas que iban en el vagon leian el periodico o miraban los campos por la ventana. Habia "
    "llovido durante la noche, por eso las calles todavia estaban mojadas y los arboles junto al "
    "rio brillaban con la luz baja. Mi hermano estaba sentado a mi lado con un libro sobre la "
    "historia de la ciudad, que habia comprado el dia anterior en una pequena tienda cerca del "
    "puerto. Me conto que el puente viejo fue construido hace mas de trescientos anos y que la gente "
    "que vivia alli tenia que pagar un peaje cada vez que queria cruzarlo. Cuando llegamos, "
    "caminamos por el mercado y compramos pan, queso y algunas manzanas para la tarde. El tiempo "
    "estaba mejorando, y hacia el mediodia el sol calentaba tanto que pudimos sentarnos afuera y "
    "comer en el parque. Habia ninos jugando con un perro, y un hombre mayor que daba de comer a los "
    "pajaros con el resto de su bocadillo. Hablamos del trabajo, de nuestros amigos y de las cosas "
    "que nos gustaria hacer el proximo verano si tenemos tiempo y dinero. Por la noche tomamos el "
    "ultimo tren de vuelta a casa.",
    /* fr */
    "Le train du matin a quitte la gare un peu apres sept heures, et la plupart des gens dans le "
    "wagon lisaient le journal ou regardaient les champs par la fenetre. Il avait plu pendant la "
    "nuit, donc les routes etaient encore mouillees et les arbres le long de la riviere brillaient "
    "dans la lumiere basse. Mon frere etait assis a cote de moi avec un livre sur l histoire de la "
    "ville, qu il avait achete la veille dans une petite boutique pres du port. Il m a raconte que "
    "le vieux pont avait ete construit il y a plus de trois cents ans et que les gens qui vivaient "
    "la devaient payer un peage chaque fois qu ils voulaient le traverser. Quand nous sommes "
    "arrives, nous avons marche dans le marche et nous avons achete du pain, du fromage et quelques "
    "pommes pour l apres midi. Le temps devenait meilleur, et vers midi le soleil etait assez chaud "
    "pour que nous puissions manger dehors dans le parc. Des enfants jouaient avec un chien, et un "
    "vieil homme donnait le reste de son sandwich aux oiseaux. Nous avons parle du travail, de nos "
    "amis et des choses que nous voudrions faire l ete prochain si nous avons le temps et l argent. "
    "Le soir, nous avons pris le dernier train pour rentrer a la maison.",
};

#endif
